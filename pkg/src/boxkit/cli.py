"""Command-line entry point: one subcommand per pipeline step.

Subcommands: stats, ratios, anchors, match, loss, split, bag, fuse, eval,
compare, convert. All outputs are deterministic; identical inputs and
seeds produce byte-identical files. Exit status 0 on success, 1 for data
or validation errors, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

import numpy as np

from . import anchors as anchors_mod
from . import distribution, ensemble, evaluation, formats, geometry, training

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2


@contextlib.contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _fmt9(x: float) -> str:
    return f"{x:.9f}"


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"expected a comma-separated number list, got {text!r}") from None


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"expected a comma-separated integer list, got {text!r}") from None


def _add_anchor_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--maps", type=int, required=True, help="number of feature maps")
    parser.add_argument(
        "--sizes", required=True, help="comma-separated feature map sizes, one per map"
    )
    parser.add_argument("--smin", type=float, default=0.2, help="minimum box scale")
    parser.add_argument("--smax", type=float, default=0.9, help="maximum box scale")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--ratios", help="comma-separated aspect ratios (default 1,2,3,0.5,0.333...)")
    group.add_argument(
        "--adaptive",
        metavar="ANNOTATIONS",
        help="derive the ratio set from this annotation file's aspect-ratio distribution",
    )
    parser.add_argument("--x0", type=float, help="histogram origin for --adaptive")
    parser.add_argument("--bin-width", type=float, help="histogram bin width for --adaptive")


def _anchor_config(args: argparse.Namespace) -> anchors_mod.AnchorConfig:
    sizes = _parse_int_list(args.sizes)
    if args.maps != len(sizes):
        raise ValueError(f"--maps {args.maps} does not match {len(sizes)} --sizes entries")
    if args.adaptive:
        records = formats.parse_annotations(args.adaptive)
        bins = distribution.BinConfig(x0=args.x0, bin_width=args.bin_width)
        ratios = anchors_mod.adaptive_ratio_set(records, bins)
        return anchors_mod.AnchorConfig(
            tuple(sizes), args.smin, args.smax, tuple(ratios), adaptive=True
        )
    if args.ratios:
        return anchors_mod.AnchorConfig(
            tuple(sizes), args.smin, args.smax, tuple(_parse_float_list(args.ratios))
        )
    return anchors_mod.AnchorConfig(tuple(sizes), args.smin, args.smax)


def _label_indexes(records) -> dict[str, int]:
    """Class labels to indexes 1..n-1 (0 is background), sorted labels."""
    labels = sorted({obj.label for record in records for obj in record.objects})
    return {label: i + 1 for i, label in enumerate(labels)}


def _cmd_stats(args: argparse.Namespace) -> int:
    records = formats.parse_annotations(args.annotations)
    stats = distribution.class_stats(records)
    percents = stats.percentages()
    with _output(args.output) as out:
        out.write("label\tcount\tpercent\n")
        for label, count in stats.counts.items():
            out.write(f"{label}\t{count}\t{_fmt9(percents[label])}\n")
        out.write(f"total\t{stats.total}\t{_fmt9(100.0 if stats.total else 0.0)}\n")
    return EXIT_OK


def _ratio_block(samples, bins: distribution.BinConfig, header: str) -> list[str]:
    reps = distribution.representative_ratios(samples, bins)
    x0 = bins.x0 if bins.x0 is not None else min(samples)
    width = (
        bins.bin_width
        if bins.bin_width is not None
        else distribution.freedman_diaconis_width(samples)
    )
    return [
        f"# {header} samples {len(samples)} x0 {_fmt9(x0)} bin_width {_fmt9(width)}",
        f"mode\t{_fmt9(reps.mode)}",
        f"mean\t{_fmt9(reps.mean)}",
        f"median\t{_fmt9(reps.median)}",
        f"q1\t{_fmt9(reps.first_quartile)}",
        f"q3\t{_fmt9(reps.third_quartile)}",
    ]


def _cmd_ratios(args: argparse.Namespace) -> int:
    records = formats.parse_annotations(args.annotations)
    bins = distribution.BinConfig(x0=args.x0, bin_width=args.bin_width)
    lines: list[str] = []
    if args.per_class:
        labels = sorted({obj.label for r in records for obj in r.objects})
        for label in labels:
            samples = distribution.aspect_ratio_samples(records, label=label)
            lines.extend(_ratio_block(samples, bins, f"class {label}"))
    else:
        samples = distribution.aspect_ratio_samples(records)
        lines.extend(_ratio_block(samples, bins, "all classes"))
    with _output(args.output) as out:
        out.write("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_anchors(args: argparse.Namespace) -> int:
    box_set = anchors_mod.generate_default_boxes(_anchor_config(args))
    with _output(args.output) as out:
        formats.write_anchor_table(box_set, out)
    return EXIT_OK


def _cmd_match(args: argparse.Namespace) -> int:
    records = formats.parse_annotations(args.annotations)
    box_set = anchors_mod.generate_default_boxes(_anchor_config(args))
    label_index = _label_indexes(records)
    num_classes = len(label_index) + 1
    cfg = training.MatchConfig(iou_threshold=args.tau, force_best_match=args.force_best)
    corner = box_set.corner_boxes()
    with _output(args.output) as out:
        for record in records:
            gts = [
                (box, label_index[label]) for label, box in record.normalized_objects()
            ]
            result = training.match_boxes(box_set, gts, cfg, num_classes=num_classes)
            best_ious = [
                round(max((geometry.jaccard(a, gt_box) for a in corner), default=0.0), 9)
                for gt_box, _ in gts
            ]
            payload = {
                "image_id": record.image_id,
                "num_positives": result.num_positives,
                "num_negatives": len(result.negatives),
                "gt_best_ious": best_ious,
            }
            out.write(json.dumps(payload, ensure_ascii=False) + "\n")
    return EXIT_OK


def _cmd_loss(args: argparse.Namespace) -> int:
    all_records = formats.parse_annotations(args.annotations)
    label_index = _label_indexes(all_records)
    num_classes = len(label_index) + 1
    if args.image is not None:
        selected = [r for r in all_records if r.image_id == args.image]
        if not selected:
            raise ValueError(f"image '{args.image}' not found in {args.annotations}")
    elif len(all_records) == 1:
        selected = all_records
    else:
        raise ValueError(
            f"{args.annotations} has {len(all_records)} images; pick one with --image"
        )
    record = selected[0]

    box_set = anchors_mod.generate_default_boxes(_anchor_config(args))
    rows = np.array(formats.parse_prediction_rows(args.pred))
    if rows.shape[1] != num_classes + 4:
        raise ValueError(
            f"prediction rows have {rows.shape[1]} columns; expected "
            f"{num_classes + 4} ({num_classes} classes incl. background + 4 offsets)"
        )
    if rows.shape[0] != len(box_set):
        raise ValueError(
            f"prediction file has {rows.shape[0]} rows but the anchor grid has {len(box_set)}"
        )
    predictions = training.PredictionMatrix(rows[:, :num_classes], rows[:, num_classes:])

    cfg = training.MatchConfig(
        iou_threshold=args.tau,
        force_best_match=args.force_best,
        neg_pos_ratio=args.neg_pos_ratio,
    )
    gts = [(box, label_index[label]) for label, box in record.normalized_objects()]
    match = training.match_boxes(box_set, gts, cfg, num_classes=num_classes)
    mined = training.hard_negative_mine(match, predictions, cfg.neg_pos_ratio)
    cls_loss = training.classification_loss(predictions, match, mined)
    loc_loss = training.localization_loss(predictions, match, box_set)
    combined = training.total_loss(
        predictions, match, box_set, training.LossConfig(alpha=args.alpha), mined
    )
    with _output(args.output) as out:
        out.write(f"num_positives\t{match.num_positives}\n")
        out.write(f"num_mined_negatives\t{len(mined)}\n")
        out.write(f"classification_loss\t{_fmt9(cls_loss)}\n")
        out.write(f"localization_loss\t{_fmt9(loc_loss)}\n")
        out.write(f"total_loss\t{_fmt9(combined)}\n")
    return EXIT_OK


def _cmd_split(args: argparse.Namespace) -> int:
    ids = formats.read_image_ids(args.dataset)
    train, test = ensemble.split_train_test(ids, args.fraction, args.seed)
    if args.train_out or args.test_out:
        if not (args.train_out and args.test_out):
            raise ValueError("--train-out and --test-out must be given together")
        with open(args.train_out, "w", encoding="utf-8") as fh:
            formats.write_id_list(train, fh)
        with open(args.test_out, "w", encoding="utf-8") as fh:
            formats.write_id_list(test, fh)
        return EXIT_OK
    out = sys.stdout
    out.write(f"# train {len(train)}\n")
    formats.write_id_list(train, out)
    out.write(f"# test {len(test)}\n")
    formats.write_id_list(test, out)
    return EXIT_OK


def _cmd_bag(args: argparse.Namespace) -> int:
    ids = formats.read_image_ids(args.dataset)
    bags = ensemble.make_bags(ids, args.num_bags, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for bag in bags:
        path = out_dir / f"bag_{bag.bag_index:03d}.txt"
        with open(path, "w", encoding="utf-8") as fh:
            formats.write_bag_manifest(bag, fh)
        sys.stdout.write(f"{path}\n")
    return EXIT_OK


def _cmd_fuse(args: argparse.Namespace) -> int:
    members = [formats.parse_detections(path) for path in args.detections]
    cfg = ensemble.FusionConfig(
        num_members=len(members),
        iou_threshold=args.iou_cluster,
        min_votes=args.min_votes,
    )
    fused = ensemble.fuse_detections(members, cfg)
    with _output(args.output) as out:
        formats.write_detections(fused, out)
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    detections = formats.parse_detections(args.dets)
    records = formats.parse_annotations(args.ann)
    cfg = evaluation.EvalConfig(iou_threshold=args.iou, interpolation=args.interpolation)
    report = evaluation.evaluate_detections(detections, records, cfg)
    with _output(args.output) as out:
        out.write(evaluation.format_report(report))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    runs = []
    for spec in args.runs:
        name, sep, value = spec.partition("=")
        if not sep or not name:
            raise ValueError(f"expected NAME=MAP_OR_REPORT, got {spec!r}")
        try:
            mean_ap = float(value)
        except ValueError:
            with open(value, encoding="utf-8") as fh:
                mean_ap = float(json.load(fh)["mean_ap"])
        runs.append((name, mean_ap))
    rows = evaluation.compare_runs(runs, args.baseline)
    with _output(args.output) as out:
        out.write(evaluation.format_comparison(rows, args.baseline))
    return EXIT_OK


def _cmd_convert(args: argparse.Namespace) -> int:
    records = formats.convert_voc(args.sources)
    with _output(args.output) as out:
        formats.write_annotations(records, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxkit",
        description="Detection-box toolkit: anchors, matching, loss, bagging, fusion, mAP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-class object counts and percentages")
    p.add_argument("annotations")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("ratios", help="representative aspect-ratio points")
    p.add_argument("annotations")
    p.add_argument("--x0", type=float, help="histogram origin (default: sample minimum)")
    p.add_argument("--bin-width", type=float, help="histogram bin width (default: Freedman-Diaconis)")
    p.add_argument("--per-class", action="store_true", help="one block per class instead of pooled")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_ratios)

    p = sub.add_parser("anchors", help="generate the default-box table")
    _add_anchor_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_anchors)

    p = sub.add_parser("match", help="match default boxes to ground truths per image")
    p.add_argument("annotations")
    _add_anchor_flags(p)
    p.add_argument("--tau", type=float, default=0.5, help="Jaccard overlap threshold")
    p.add_argument("--force-best", action="store_true", help="every GT claims its best anchor")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("loss", help="evaluate the detector loss on a prediction file")
    p.add_argument("--pred", required=True, help="prediction table (n confidences + 4 offsets per row)")
    p.add_argument("--ann", required=True, dest="annotations", help="annotation file")
    p.add_argument("--image", help="image id (required unless the file has exactly one)")
    _add_anchor_flags(p)
    p.add_argument("--tau", type=float, default=0.5, help="Jaccard overlap threshold")
    p.add_argument("--force-best", action="store_true")
    p.add_argument("--alpha", type=float, default=1.0, help="localization loss weight")
    p.add_argument("--neg-pos-ratio", type=float, default=3.0, help="hard-negative mining ratio")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("split", help="seeded train/test split of image ids")
    p.add_argument("dataset", help="annotation file or plain id list")
    p.add_argument("--fraction", type=float, default=0.2, help="test fraction")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-out")
    p.add_argument("--test-out")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("bag", help="draw bootstrap bags of the training images")
    p.add_argument("dataset", help="annotation file or plain id list")
    p.add_argument("-k", "--num-bags", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_bag)

    p = sub.add_parser("fuse", help="vote-fuse several detectors' outputs")
    p.add_argument("detections", nargs="+", help="one detection file per ensemble member")
    p.add_argument("--iou-cluster", type=float, default=0.5, help="cluster IoU threshold")
    p.add_argument("--min-votes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="reserved; fusion is deterministic")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="score detections against annotations")
    p.add_argument("--dets", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--iou", type=float, default=0.5, help="true-positive IoU threshold")
    p.add_argument(
        "--interpolation",
        choices=("all-point", "11-point"),
        default="all-point",
    )
    p.add_argument("--json", help="also write the report as JSON to this path")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="mAP improvement table against a baseline")
    p.add_argument("runs", nargs="+", metavar="NAME=MAP_OR_REPORT",
                   help="run name with an mAP value or an eval --json report path")
    p.add_argument("--baseline", required=True, help="name of the baseline run")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("convert", help="convert PASCAL-VOC XML annotations")
    p.add_argument("sources", nargs="+", help="XML files or directories of them")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_convert)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
