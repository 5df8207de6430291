"""Bootstrap bagging and plurality-vote fusion of detector outputs.

Bags are resamples (with replacement, same size) of the training image
list; each bag gets its own RNG stream derived from the base seed so
manifests regenerate byte-identically. Fusion pools several detectors'
outputs per image, clusters them greedily by IoU, votes the class per
cluster, and averages the boxes.

Nothing here trains or invokes a detector; members are just detection
lists, so "SSD + top bag" versus "all bags" is expressed purely by which
detection files are passed in.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .formats import Detection
from .geometry import corner_iou

# splitmix64-style increment; bag i draws from seed base + (i+1) * this, mod 2^64.
_SEED_GOLDEN = 0x9E3779B97F4A7C15
_SEED_MASK = (1 << 64) - 1


def derive_bag_seed(base_seed: int, bag_index: int) -> int:
    """Per-bag RNG seed: ``(base_seed + (bag_index + 1) * golden64) mod 2^64``."""
    return (base_seed + (bag_index + 1) * _SEED_GOLDEN) & _SEED_MASK


@dataclass(frozen=True)
class BagManifest:
    """One bootstrap resample of the training images.

    ``image_ids`` has exactly the training-set length, drawn with
    replacement; the manifest is fully reproducible from
    (training ids, base seed, bag index).
    """

    bag_index: int
    base_seed: int
    image_ids: tuple[str, ...]


@dataclass(frozen=True)
class FusionConfig:
    """Fusion parameters: cluster IoU, vote floor, and member count."""

    num_members: int
    iou_threshold: float = 0.5
    min_votes: int = 1

    def __post_init__(self) -> None:
        if self.num_members < 1:
            raise ValueError(f"need at least one member, got {self.num_members}")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"cluster IoU must be in (0, 1), got {self.iou_threshold}")
        if not 1 <= self.min_votes <= self.num_members:
            raise ValueError(
                f"min_votes must be in [1, {self.num_members}], got {self.min_votes}"
            )


@dataclass(frozen=True)
class FusedDetection(Detection):
    """A detection agreed on by ``votes`` distinct ensemble members."""

    votes: int = 1


def split_train_test(
    image_ids: Sequence[str], test_fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """Disjoint, exhaustive, seeded-shuffle split into (train, test).

    The test part gets ``round(test_fraction * N)`` ids (half away from
    zero); both parts come back in shuffle order.
    """
    if len(image_ids) < 2:
        raise ValueError(f"need at least 2 images to split, got {len(image_ids)}")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(image_ids))
    test_size = int(test_fraction * len(image_ids) + 0.5)
    test = [image_ids[i] for i in order[:test_size]]
    train = [image_ids[i] for i in order[test_size:]]
    return train, test


def make_bags(train_ids: Sequence[str], k: int, base_seed: int) -> list[BagManifest]:
    """Draw ``k`` bootstrap bags from the training ids.

    Bag ``i`` uses an independent generator seeded by
    :func:`derive_bag_seed`, so any bag can be regenerated alone.
    """
    if k <= 0:
        raise ValueError(f"number of bags must be positive, got {k}")
    if len(train_ids) == 0:
        raise ValueError("training set is empty")
    n = len(train_ids)
    bags = []
    for i in range(k):
        rng = np.random.default_rng(derive_bag_seed(base_seed, i))
        draws = rng.integers(0, n, size=n)
        bags.append(
            BagManifest(
                bag_index=i,
                base_seed=base_seed,
                image_ids=tuple(train_ids[j] for j in draws),
            )
        )
    return bags


def plurality_vote(labels: Sequence[str], scores: Sequence[float]) -> str:
    """Most frequent label; ties go to the higher mean score, then to the
    lexicographically smaller label."""
    if len(labels) == 0:
        raise ValueError("cannot vote over no labels")
    if len(labels) != len(scores):
        raise ValueError(f"{len(labels)} labels vs {len(scores)} scores")
    counts = Counter(labels)
    top = max(counts.values())
    tied = [label for label, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    mean_score = {
        label: sum(s for l, s in zip(labels, scores) if l == label) / counts[label]
        for label in tied
    }
    return min(tied, key=lambda label: (-mean_score[label], label))


class _Cluster:
    __slots__ = ("founder_box", "members")

    def __init__(self, member_index: int, det: Detection):
        self.founder_box = det.box
        self.members: list[tuple[int, Detection]] = [(member_index, det)]

    def member_indexes(self) -> set[int]:
        return {m for m, _ in self.members}


def _fuse_one_image(
    image_id: str, pooled: list[tuple[int, Detection]], config: FusionConfig
) -> list[FusedDetection]:
    # Greedy score-ordered clustering: a detection joins the first (highest
    # scoring) cluster whose founder box it overlaps and that has no
    # detection from the same member yet; otherwise it founds a cluster.
    pooled = sorted(pooled, key=lambda item: -item[1].score)
    clusters: list[_Cluster] = []
    for member_index, det in pooled:
        for cluster in clusters:
            if member_index in cluster.member_indexes():
                continue
            if corner_iou(cluster.founder_box, det.box) >= config.iou_threshold:
                cluster.members.append((member_index, det))
                break
        else:
            clusters.append(_Cluster(member_index, det))

    fused = []
    for cluster in clusters:
        votes = len(cluster.member_indexes())
        if votes < config.min_votes:
            continue
        dets = [d for _, d in cluster.members]
        label = plurality_vote([d.label for d in dets], [d.score for d in dets])
        weight_sum = sum(d.score for d in dets)
        if weight_sum > 0:
            weights = [d.score / weight_sum for d in dets]
        else:
            weights = [1.0 / len(dets)] * len(dets)  # all-zero scores: plain mean
        box = [
            sum(w * d.box[c] for w, d in zip(weights, dets))
            for c in range(4)
        ]
        fused.append(
            FusedDetection(
                image_id=image_id,
                label=label,
                score=sum(d.score for d in dets) / config.num_members,
                xmin=box[0],
                ymin=box[1],
                xmax=box[2],
                ymax=box[3],
                votes=votes,
            )
        )
    return fused


def fuse_detections(
    members: Sequence[Sequence[Detection]], config: FusionConfig | None = None
) -> list[FusedDetection]:
    """Fuse K detectors' outputs into one voted detection set.

    All members must cover the same image ids. Per image, detections are
    pooled and clustered class-agnostically (at most one detection per
    member per cluster); each cluster becomes one fused detection with the
    plurality class, the score-weighted mean box, score = (sum of member
    scores) / K, and one vote per contributing member. Clusters below
    ``min_votes`` are dropped.

    Output is ordered by image id, then cluster creation (score) order.
    """
    if config is None:
        config = FusionConfig(num_members=len(members))
    if config.num_members != len(members):
        raise ValueError(f"config says {config.num_members} members, got {len(members)}")
    if len(members) == 0:
        raise ValueError("no members to fuse")

    coverages = [frozenset(d.image_id for d in member) for member in members]
    if len(set(coverages)) > 1:
        union = sorted(set().union(*coverages))
        missing = {
            i: sorted(set(union) - set(cov))
            for i, cov in enumerate(coverages)
            if set(cov) != set(union)
        }
        raise ValueError(f"members cover different image sets; missing per member: {missing}")

    by_image: dict[str, list[tuple[int, Detection]]] = {}
    for member_index, member in enumerate(members):
        for det in member:
            by_image.setdefault(det.image_id, []).append((member_index, det))

    fused: list[FusedDetection] = []
    for image_id in sorted(by_image):
        fused.extend(_fuse_one_image(image_id, by_image[image_id], config))
    return fused
