"""Train/test splitting, bootstrap bags, voting, and detection fusion."""

import io
import math

import numpy as np
import pytest

from boxkit.ensemble import (
    BagManifest,
    FusedDetection,
    FusionConfig,
    derive_bag_seed,
    fuse_detections,
    make_bags,
    plurality_vote,
    split_train_test,
)
from boxkit.formats import Detection, write_bag_manifest


def _det(image_id, label, score, box):
    return Detection(image_id, label, score, *box)


class TestSplit:
    IDS = [f"img_{i:02d}" for i in range(10)]

    def test_twenty_percent_split_sizes(self):
        train, test = split_train_test(self.IDS, 0.2, seed=3)
        assert len(test) == 2 and len(train) == 8

    def test_deterministic(self):
        assert split_train_test(self.IDS, 0.2, seed=9) == split_train_test(
            self.IDS, 0.2, seed=9
        )

    def test_partition(self):
        train, test = split_train_test(self.IDS, 0.3, seed=1)
        assert set(train) | set(test) == set(self.IDS)
        assert set(train).isdisjoint(test)

    def test_rounding_half_up(self):
        train, test = split_train_test(self.IDS, 0.25, seed=1)
        assert len(test) == 3  # round(2.5) away from zero

    def test_too_small_dataset_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            split_train_test(["only"], 0.2, seed=0)

    def test_bad_fraction_rejected(self):
        for fraction in (0.0, 1.0, -0.3):
            with pytest.raises(ValueError, match="fraction"):
                split_train_test(self.IDS, fraction, seed=0)


class TestBags:
    IDS = [f"img_{i:03d}" for i in range(40)]

    def test_bag_lengths_equal_training_size(self):
        for bag in make_bags(self.IDS, k=5, base_seed=7):
            assert len(bag.image_ids) == len(self.IDS)

    def test_single_element_training_set(self):
        bags = make_bags(["a"], k=3, base_seed=0)
        assert all(bag.image_ids == ("a",) for bag in bags)

    def test_all_identifiers_exist(self):
        for bag in make_bags(self.IDS, k=4, base_seed=12):
            assert set(bag.image_ids) <= set(self.IDS)

    def test_regeneration_is_byte_identical(self):
        def render(bags):
            out = io.StringIO()
            for bag in bags:
                write_bag_manifest(bag, out)
            return out.getvalue()

        assert render(make_bags(self.IDS, 3, 42)) == render(make_bags(self.IDS, 3, 42))

    def test_different_bags_differ(self):
        first, second = make_bags(self.IDS, 2, 42)
        assert first.image_ids != second.image_ids

    def test_seed_derivation_formula(self):
        golden = 0x9E3779B97F4A7C15
        assert derive_bag_seed(10, 0) == (10 + golden) % 2**64
        assert derive_bag_seed(10, 3) == (10 + 4 * golden) % 2**64

    def test_bag_independent_of_k(self):
        # bag i is derived from (seed, i) alone, not from how many bags exist
        three = make_bags(self.IDS, 3, 5)
        five = make_bags(self.IDS, 5, 5)
        assert three[2].image_ids == five[2].image_ids

    def test_unique_fraction_near_bootstrap_expectation(self):
        ids = [str(i) for i in range(500)]
        bags = make_bags(ids, 40, base_seed=2)
        fractions = [len(set(bag.image_ids)) / len(ids) for bag in bags]
        expected = 1.0 - (1.0 - 1.0 / len(ids)) ** len(ids)
        assert abs(np.mean(fractions) - expected) < 0.02

    def test_invalid_inputs(self):
        with pytest.raises(ValueError, match="positive"):
            make_bags(self.IDS, 0, 1)
        with pytest.raises(ValueError, match="empty"):
            make_bags([], 2, 1)


class TestPluralityVote:
    def test_single_label(self):
        assert plurality_vote(["c1"], [0.4]) == "c1"

    def test_majority_wins(self):
        assert plurality_vote(["c1", "c1", "c2"], [0.1, 0.1, 0.99]) == "c1"

    def test_tie_broken_by_mean_score(self):
        assert plurality_vote(["c1", "c2"], [0.9, 0.4]) == "c1"
        assert plurality_vote(["c1", "c2"], [0.4, 0.9]) == "c2"

    def test_tie_broken_lexicographically_last(self):
        assert plurality_vote(["b", "a"], [0.5, 0.5]) == "a"

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no labels"):
            plurality_vote([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="labels vs"):
            plurality_vote(["a"], [0.5, 0.5])


class TestFusionConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            FusionConfig(num_members=0)
        with pytest.raises(ValueError):
            FusionConfig(num_members=3, iou_threshold=1.0)
        with pytest.raises(ValueError):
            FusionConfig(num_members=3, min_votes=4)
        with pytest.raises(ValueError):
            FusionConfig(num_members=3, min_votes=0)


class TestFuseDetections:
    BOX = (10.0, 10.0, 110.0, 110.0)

    def test_single_member_is_identity(self):
        member = [
            _det("img_a", "c1", 0.9, self.BOX),
            _det("img_a", "c2", 0.7, (300.0, 300.0, 400.0, 380.0)),
        ]
        fused = fuse_detections([member])
        assert len(fused) == 2
        for original, result in zip(member, fused):
            assert result.box == original.box
            assert result.label == original.label
            assert result.score == original.score
            assert result.votes == 1

    def test_unanimous_members_fuse_to_one(self):
        det = _det("img_a", "c1", 0.8, self.BOX)
        fused = fuse_detections([[det], [det], [det]])
        assert len(fused) == 1
        (result,) = fused
        assert result.box == self.BOX
        assert result.label == "c1"
        assert result.score == pytest.approx(0.8)
        assert result.votes == 3

    def test_colocated_plurality_class(self):
        members = [
            [_det("img_a", "c1", 0.8, self.BOX)],
            [_det("img_a", "c1", 0.7, self.BOX)],
            [_det("img_a", "c2", 0.9, self.BOX)],
        ]
        (result,) = fuse_detections(members)
        assert result.label == "c1"
        assert result.votes == 3

    def test_score_weighted_box_mean(self):
        members = [
            [_det("img_a", "c1", 0.6, (0.0, 0.0, 100.0, 100.0))],
            [_det("img_a", "c1", 0.2, (20.0, 0.0, 120.0, 100.0))],
        ]
        (result,) = fuse_detections(members)
        expected_xmin = (0.6 * 0.0 + 0.2 * 20.0) / 0.8
        expected_xmax = (0.6 * 100.0 + 0.2 * 120.0) / 0.8
        assert result.xmin == pytest.approx(expected_xmin)
        assert result.xmax == pytest.approx(expected_xmax)
        assert result.score == pytest.approx(0.8 / 2)

    def test_min_votes_drops_singletons(self):
        members = [
            [_det("img_a", "c1", 0.9, self.BOX), _det("img_a", "c2", 0.8, (500.0, 500.0, 600.0, 600.0))],
            [_det("img_a", "c1", 0.85, self.BOX)],
        ]
        fused = fuse_detections(members, FusionConfig(num_members=2, min_votes=2))
        assert len(fused) == 1
        assert fused[0].label == "c1"

    def test_same_member_never_joins_cluster_twice(self):
        nearly = (12.0, 10.0, 112.0, 110.0)
        members = [[_det("img_a", "c1", 0.9, self.BOX), _det("img_a", "c1", 0.8, nearly)]]
        fused = fuse_detections(members)
        assert len(fused) == 2  # overlapping, but one member -> two clusters

    def test_coverage_mismatch_rejected(self):
        members = [
            [_det("img_a", "c1", 0.9, self.BOX)],
            [_det("img_b", "c1", 0.9, self.BOX)],
        ]
        with pytest.raises(ValueError, match="coverage|image sets"):
            fuse_detections(members)

    def test_config_member_count_mismatch_rejected(self):
        members = [[_det("img_a", "c1", 0.9, self.BOX)]]
        with pytest.raises(ValueError, match="members"):
            fuse_detections(members, FusionConfig(num_members=2))

    def test_all_zero_scores_use_plain_mean(self):
        members = [
            [_det("img_a", "c1", 0.0, (0.0, 0.0, 100.0, 100.0))],
            [_det("img_a", "c1", 0.0, (20.0, 0.0, 120.0, 100.0))],
        ]
        (result,) = fuse_detections(members)
        assert result.xmin == pytest.approx(10.0)
        assert result.score == 0.0

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        members = []
        for _ in range(3):
            dets = []
            for img in ("img_a", "img_b"):
                for _ in range(4):
                    x, y = rng.uniform(0, 400, size=2)
                    w, h = rng.uniform(30, 120, size=2)
                    dets.append(
                        _det(img, rng.choice(["c1", "c2"]), float(rng.uniform(0.1, 1.0)),
                             (x, y, x + w, y + h))
                    )
            members.append(dets)
        assert fuse_detections(members) == fuse_detections(members)

    def test_majority_reproduction_survives(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            k = int(rng.choice([3, 5]))
            reproducers = k // 2 + 1
            base = (100.0, 100.0, 260.0, 220.0)
            members = []
            for member in range(k):
                if member < reproducers:
                    jitter = rng.uniform(-3, 3, size=4)
                    box = tuple(c + j for c, j in zip(base, jitter))
                    members.append([_det("img", "target", float(rng.uniform(0.5, 1.0)), box)])
                else:
                    members.append([_det("img", "noise", 0.9, (700.0, 700.0, 800.0, 800.0))])
            fused = fuse_detections(
                members,
                FusionConfig(num_members=k, min_votes=math.ceil(k / 2)),
            )
            survivors = [f for f in fused if f.label == "target"]
            assert len(survivors) == 1
            assert survivors[0].votes == reproducers

    def test_dropping_member_never_raises_votes(self):
        rng = np.random.default_rng(31)
        members = []
        for _ in range(4):
            dets = []
            for _ in range(5):
                x, y = rng.uniform(0, 300, size=2)
                w, h = rng.uniform(40, 150, size=2)
                dets.append(
                    _det("img", str(rng.choice(["a", "b"])), float(rng.uniform(0.2, 1.0)),
                         (x, y, x + w, y + h))
                )
            members.append(dets)
        full = fuse_detections(members)
        reduced = fuse_detections(members[:-1])

        def best_votes(fused, box):
            from boxkit.geometry import corner_iou

            votes = [f.votes for f in fused if corner_iou(f.box, box) >= 0.5]
            return max(votes, default=0)

        for f in reduced:
            assert f.votes <= best_votes(full, f.box) or best_votes(full, f.box) == 0
