"""File formats and dataset ingestion.

Two line-delimited JSON (UTF-8) record formats are the toolkit's data
boundary; both carry absolute pixel coordinates, which are normalized to
[0, 1] internally:

  annotations:  {"image_id", "width", "height",
                 "objects": [{"label", "bbox": [xmin, ymin, xmax, ymax]}]}
  detections:   {"image_id", "label", "score", "bbox"}  (+ optional "votes")

Generated artifacts (anchor tables, bag manifests, id lists) are plain
line-oriented text. All numeric output is written with 9-decimal
precision so identical inputs always produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

from .geometry import BoundingBox


class ParseError(ValueError):
    """Malformed or invalid input file; carries file position context."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{where} {message}".strip())


@dataclass(frozen=True)
class GroundTruthObject:
    """One labeled object: pixel-space corner box inside its image."""

    label: str
    xmin: float
    ymin: float
    xmax: float
    ymax: float


@dataclass(frozen=True)
class GroundTruthRecord:
    """All ground-truth objects of one image, plus the image dimensions."""

    image_id: str
    width: int
    height: int
    objects: tuple[GroundTruthObject, ...]

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"image '{self.image_id}' has non-positive dimensions "
                f"{self.width}x{self.height}"
            )
        for obj in self.objects:
            if not obj.label:
                raise ValueError(f"image '{self.image_id}' has an object with empty label")
            coords = (obj.xmin, obj.ymin, obj.xmax, obj.ymax)
            if not all(math.isfinite(c) for c in coords):
                raise ValueError(f"image '{self.image_id}': non-finite box {coords}")
            if not (0 <= obj.xmin <= obj.xmax <= self.width):
                raise ValueError(
                    f"image '{self.image_id}': x range {obj.xmin}..{obj.xmax} "
                    f"outside [0, {self.width}]"
                )
            if not (0 <= obj.ymin <= obj.ymax <= self.height):
                raise ValueError(
                    f"image '{self.image_id}': y range {obj.ymin}..{obj.ymax} "
                    f"outside [0, {self.height}]"
                )

    def normalized_objects(self) -> list[tuple[str, BoundingBox]]:
        """Objects as (label, box) with coordinates scaled to [0, 1]."""
        return [
            (
                obj.label,
                BoundingBox(
                    obj.xmin / self.width,
                    obj.ymin / self.height,
                    obj.xmax / self.width,
                    obj.ymax / self.height,
                ),
            )
            for obj in self.objects
        ]


@dataclass(frozen=True)
class Detection:
    """A scored detection: pixel-space corner box on a named image."""

    image_id: str
    label: str
    score: float
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if not self.label:
            raise ValueError(f"detection on '{self.image_id}' has empty label")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(
                f"detection on '{self.image_id}': score {self.score} outside [0, 1]"
            )
        coords = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(c) and c >= 0 for c in coords):
            raise ValueError(f"detection on '{self.image_id}': bad box {coords}")
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"detection on '{self.image_id}': misordered box {coords}")

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


def _round9(x: float) -> float:
    return round(float(x), 9)


def _fmt9(x: float) -> str:
    return f"{x:.9f}"


def _read_lines(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            yield line_no, line


def _json_line(path: str | Path, line_no: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", str(path), line_no) from None
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object", str(path), line_no)
    return obj


def _require(obj: dict, key: str, path: str | Path, line_no: int):
    if key not in obj:
        raise ParseError(f"missing required field '{key}'", str(path), line_no)
    return obj[key]


def _bbox_field(obj: dict, path: str | Path, line_no: int) -> tuple[float, float, float, float]:
    bbox = _require(obj, "bbox", path, line_no)
    if not (isinstance(bbox, list) and len(bbox) == 4):
        raise ParseError(f"bbox must be a 4-element list, got {bbox!r}", str(path), line_no)
    try:
        return tuple(float(v) for v in bbox)  # type: ignore[return-value]
    except (TypeError, ValueError):
        raise ParseError(f"bbox values must be numeric, got {bbox!r}", str(path), line_no) from None


def parse_annotations(path: str | Path) -> list[GroundTruthRecord]:
    """Read ground-truth records from a JSONL annotation file.

    Blank lines are skipped; unknown keys are ignored. Malformed lines and
    invariant violations (misordered or out-of-bounds boxes) raise
    :class:`ParseError` naming the offending line.
    """
    records = []
    for line_no, line in _read_lines(path):
        obj = _json_line(path, line_no, line)
        raw_objects = obj.get("objects", [])
        if not isinstance(raw_objects, list):
            raise ParseError("'objects' must be a list", str(path), line_no)
        gt_objects = []
        for entry in raw_objects:
            if not isinstance(entry, dict):
                raise ParseError(f"object entry must be a JSON object, got {entry!r}", str(path), line_no)
            label = _require(entry, "label", path, line_no)
            x1, y1, x2, y2 = _bbox_field(entry, path, line_no)
            gt_objects.append(GroundTruthObject(str(label), x1, y1, x2, y2))
        try:
            record = GroundTruthRecord(
                image_id=str(_require(obj, "image_id", path, line_no)),
                width=int(_require(obj, "width", path, line_no)),
                height=int(_require(obj, "height", path, line_no)),
                objects=tuple(gt_objects),
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), str(path), line_no) from None
        records.append(record)
    return records


def parse_detections(path: str | Path) -> list[Detection]:
    """Read detections from a JSONL detection file (schema in module doc)."""
    detections = []
    for line_no, line in _read_lines(path):
        obj = _json_line(path, line_no, line)
        x1, y1, x2, y2 = _bbox_field(obj, path, line_no)
        try:
            det = Detection(
                image_id=str(_require(obj, "image_id", path, line_no)),
                label=str(_require(obj, "label", path, line_no)),
                score=float(_require(obj, "score", path, line_no)),
                xmin=x1,
                ymin=y1,
                xmax=x2,
                ymax=y2,
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), str(path), line_no) from None
        detections.append(det)
    return detections


def write_annotations(records: Iterable[GroundTruthRecord], stream: IO[str]) -> None:
    """Write records in the annotation JSONL format, one image per line."""
    for record in records:
        payload = {
            "image_id": record.image_id,
            "width": record.width,
            "height": record.height,
            "objects": [
                {
                    "label": obj.label,
                    "bbox": [_round9(obj.xmin), _round9(obj.ymin), _round9(obj.xmax), _round9(obj.ymax)],
                }
                for obj in record.objects
            ],
        }
        stream.write(json.dumps(payload, ensure_ascii=False) + "\n")


def write_detections(detections: Iterable[Detection], stream: IO[str]) -> None:
    """Write detections in the detection JSONL format.

    Fused detections carry a ``votes`` field; it is emitted when present.
    """
    for det in detections:
        payload = {
            "image_id": det.image_id,
            "label": det.label,
            "score": _round9(det.score),
            "bbox": [_round9(det.xmin), _round9(det.ymin), _round9(det.xmax), _round9(det.ymax)],
        }
        votes = getattr(det, "votes", None)
        if votes is not None:
            payload["votes"] = votes
        stream.write(json.dumps(payload, ensure_ascii=False) + "\n")


def write_anchor_table(boxes, stream: IO[str]) -> None:
    """Write generated default boxes as a tab-separated table.

    One box per line, no header, columns:
    feature map k, row i, column j, aspect ratio, scale, cx, cy, w, h
    (center form, 9-decimal precision, generation order).
    """
    for box in boxes:
        fields = [
            str(box.feature_map),
            str(box.row),
            str(box.col),
            _fmt9(box.ratio),
            _fmt9(box.scale),
            _fmt9(box.cx),
            _fmt9(box.cy),
            _fmt9(box.w),
            _fmt9(box.h),
        ]
        stream.write("\t".join(fields) + "\n")


def write_bag_manifest(manifest, stream: IO[str]) -> None:
    """Write one bootstrap bag: a comment header, then one image id per line."""
    stream.write(
        f"# bag {manifest.bag_index} seed {manifest.base_seed} n {len(manifest.image_ids)}\n"
    )
    for image_id in manifest.image_ids:
        stream.write(image_id + "\n")


def write_id_list(ids: Iterable[str], stream: IO[str]) -> None:
    for image_id in ids:
        stream.write(image_id + "\n")


def read_image_ids(path: str | Path) -> list[str]:
    """Image ids from an annotation file or a plain id list.

    Files whose first data line starts with ``{`` are parsed as annotation
    JSONL; anything else is treated as one id per line. ``#`` comment
    lines (bag-manifest headers) and blanks are skipped, and duplicates
    are dropped keeping first occurrence.
    """
    lines = [(no, line) for no, line in _read_lines(path) if not line.startswith("#")]
    if lines and lines[0][1].startswith("{"):
        raw_ids = [r.image_id for r in parse_annotations(path)]
    else:
        raw_ids = [line for _, line in lines]
    seen = set()
    ids = []
    for image_id in raw_ids:
        if image_id not in seen:
            seen.add(image_id)
            ids.append(image_id)
    return ids


def parse_prediction_rows(path: str | Path) -> list[list[float]]:
    """Read a whitespace-separated numeric prediction table.

    One row per default box: n class confidences followed by 4
    localization values (so at least 6 columns). Blank lines and ``#``
    comments are skipped; ragged or non-numeric rows raise ParseError.
    """
    rows: list[list[float]] = []
    for line_no, line in _read_lines(path):
        if line.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise ParseError("non-numeric prediction value", str(path), line_no) from None
        if len(row) < 6:
            raise ParseError(
                f"prediction rows need >= 6 columns (n>=2 confidences + 4 offsets), got {len(row)}",
                str(path),
                line_no,
            )
        if rows and len(row) != len(rows[0]):
            raise ParseError(
                f"ragged prediction row: {len(row)} columns, expected {len(rows[0])}",
                str(path),
                line_no,
            )
        rows.append(row)
    if not rows:
        raise ParseError("prediction file is empty", str(path))
    return rows


def _xml_text(node: ET.Element | None, tag: str, path: str) -> str:
    child = node.find(tag) if node is not None else None
    if child is None or child.text is None:
        raise ParseError(f"missing <{tag}> element", path)
    return child.text.strip()


def parse_voc_xml(path: str | Path) -> GroundTruthRecord:
    """Convert one PASCAL-VOC XML annotation into a record.

    Only <size>, <filename> and <object>/<name>/<bndbox> are consumed;
    every other tag is ignored.
    """
    path_str = str(path)
    try:
        root = ET.parse(path_str).getroot()
    except ET.ParseError as exc:
        raise ParseError(f"invalid XML ({exc})", path_str) from None
    filename_node = root.find("filename")
    if filename_node is not None and filename_node.text:
        image_id = filename_node.text.strip()
    else:
        image_id = Path(path_str).stem
    size = root.find("size")
    if size is None:
        raise ParseError("missing <size> element", path_str)
    width = int(float(_xml_text(size, "width", path_str)))
    height = int(float(_xml_text(size, "height", path_str)))
    objects = []
    for obj in root.findall("object"):
        label = _xml_text(obj, "name", path_str)
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise ParseError(f"object '{label}' has no <bndbox>", path_str)
        objects.append(
            GroundTruthObject(
                label=label,
                xmin=float(_xml_text(bndbox, "xmin", path_str)),
                ymin=float(_xml_text(bndbox, "ymin", path_str)),
                xmax=float(_xml_text(bndbox, "xmax", path_str)),
                ymax=float(_xml_text(bndbox, "ymax", path_str)),
            )
        )
    try:
        return GroundTruthRecord(image_id, width, height, tuple(objects))
    except ValueError as exc:
        raise ParseError(str(exc), path_str) from None


def convert_voc(paths: Sequence[str | Path]) -> list[GroundTruthRecord]:
    """Convert VOC XML files (or directories of them) to records.

    Directories are expanded to their ``*.xml`` members in sorted order so
    the output is reproducible.
    """
    xml_files: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            xml_files.extend(sorted(p.glob("*.xml")))
        else:
            xml_files.append(p)
    return [parse_voc_xml(p) for p in xml_files]
