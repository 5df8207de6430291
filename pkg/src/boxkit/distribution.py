"""Empirical aspect-ratio statistics over a training set.

The density of object aspect ratios is estimated with a plain histogram
(bin ``b`` covers the half-open interval ``[x0 + b*h, x0 + (b+1)*h)``), and
five representative points are read off it: the mode (center of the
fullest bin), the arithmetic mean, and the nearest-rank median and
quartiles. Those five values are what the adaptive default-box generator
feeds on.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .formats import GroundTruthRecord


@dataclass(frozen=True)
class Histogram:
    """Fixed-width histogram over ``[x0, x0 + len(counts)*bin_width)``."""

    x0: float
    bin_width: float
    counts: tuple[int, ...]
    n: int

    @property
    def num_bins(self) -> int:
        return len(self.counts)

    def bin_center(self, index: int) -> float:
        return self.x0 + (index + 0.5) * self.bin_width

    def mode(self) -> float:
        """Center of the maximal-count bin; ties go to the lowest bin."""
        best = max(range(self.num_bins), key=lambda b: (self.counts[b], -b))
        return self.bin_center(best)


@dataclass(frozen=True)
class BinConfig:
    """Histogram bin settings; ``None`` fields fall back to defaults.

    Default origin is the sample minimum; default width comes from the
    Freedman-Diaconis rule (with a range-based fallback for degenerate
    spreads).
    """

    x0: float | None = None
    bin_width: float | None = None

    def __post_init__(self) -> None:
        if self.bin_width is not None and self.bin_width <= 0:
            raise ValueError(f"bin width must be positive, got {self.bin_width}")


@dataclass(frozen=True)
class RepresentativeRatios:
    """Five summary points of an aspect-ratio distribution."""

    mode: float
    mean: float
    median: float
    first_quartile: float
    third_quartile: float

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if not all(v > 0 for v in values):
            raise ValueError(f"representative ratios must be positive, got {values}")
        if not self.first_quartile <= self.median <= self.third_quartile:
            raise ValueError(f"quartiles out of order: {values}")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.mode, self.mean, self.median, self.first_quartile, self.third_quartile)


@dataclass(frozen=True)
class ClassStats:
    """Object count and percentage share per label."""

    counts: dict[str, int]
    total: int

    def percentages(self) -> dict[str, float]:
        if self.total == 0:
            return {label: 0.0 for label in self.counts}
        return {label: 100.0 * c / self.total for label, c in self.counts.items()}


def build_histogram(samples: Sequence[float], x0: float, bin_width: float) -> Histogram:
    """Count samples into half-open bins ``[x0 + b*h, x0 + (b+1)*h)``."""
    if len(samples) == 0:
        raise ValueError("cannot build a histogram from no samples")
    if bin_width <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    low = min(samples)
    if low < x0:
        raise ValueError(f"sample {low} lies below histogram origin {x0}")
    indices = [int(math.floor((s - x0) / bin_width)) for s in samples]
    counts = [0] * (max(indices) + 1)
    for b in indices:
        counts[b] += 1
    return Histogram(x0=float(x0), bin_width=float(bin_width), counts=tuple(counts), n=len(samples))


def density_at(hist: Histogram, x: float) -> float:
    """Histogram density estimate ``count(bin of x) / (n * h)``.

    Zero outside the covered range; integrates to 1 over the bins.
    """
    if x < hist.x0:
        return 0.0
    b = int(math.floor((x - hist.x0) / hist.bin_width))
    if b >= hist.num_bins:
        return 0.0
    return hist.counts[b] / (hist.n * hist.bin_width)


def nearest_rank_quantile(samples: Sequence[float], q: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``q``.

    No interpolation: the result is always one of the samples.
    """
    if len(samples) == 0:
        raise ValueError("cannot take a quantile of no samples")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {q}")
    ordered = sorted(samples)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def freedman_diaconis_width(samples: Sequence[float]) -> float:
    """Freedman-Diaconis bin width, 2*IQR/n^(1/3).

    Falls back to the sample range (or 1.0 for constant data) when the
    IQR collapses to zero.
    """
    n = len(samples)
    if n == 0:
        raise ValueError("cannot choose a bin width from no samples")
    iqr = nearest_rank_quantile(samples, 0.75) - nearest_rank_quantile(samples, 0.25)
    width = 2.0 * iqr / n ** (1.0 / 3.0)
    if width <= 0:
        width = max(samples) - min(samples)
    if width <= 0:
        width = 1.0
    return width


def _validate_ratio_samples(samples: Sequence[float]) -> None:
    if len(samples) == 0:
        raise ValueError("no aspect-ratio samples")
    for s in samples:
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"aspect-ratio samples must be positive, got {s}")


def representative_ratios(
    samples: Sequence[float], config: BinConfig | None = None
) -> RepresentativeRatios:
    """Mode, mean, median and quartiles of a positive sample set.

    The mode is the center of the fullest histogram bin under ``config``
    (lowest bin wins ties); the median and quartiles use the nearest-rank
    rule. Results do not depend on sample order.
    """
    _validate_ratio_samples(samples)
    cfg = config or BinConfig()
    x0 = cfg.x0 if cfg.x0 is not None else min(samples)
    width = cfg.bin_width if cfg.bin_width is not None else freedman_diaconis_width(samples)
    hist = build_histogram(samples, x0, width)
    return RepresentativeRatios(
        mode=hist.mode(),
        mean=math.fsum(samples) / len(samples),
        median=nearest_rank_quantile(samples, 0.5),
        first_quartile=nearest_rank_quantile(samples, 0.25),
        third_quartile=nearest_rank_quantile(samples, 0.75),
    )


def aspect_ratio_samples(
    records: Iterable[GroundTruthRecord], label: str | None = None
) -> list[float]:
    """Pixel-space width/height ratio of every ground-truth object.

    Restricted to one class when ``label`` is given. Zero-width or
    zero-height boxes have no aspect ratio and raise.
    """
    ratios: list[float] = []
    for record in records:
        for obj in record.objects:
            if label is not None and obj.label != label:
                continue
            w = obj.xmax - obj.xmin
            h = obj.ymax - obj.ymin
            if w <= 0 or h <= 0:
                raise ValueError(
                    f"object '{obj.label}' in image '{record.image_id}' has zero-size box"
                )
            ratios.append(w / h)
    return ratios


def class_stats(records: Iterable[GroundTruthRecord]) -> ClassStats:
    """Per-label object counts and percentage shares, labels sorted."""
    counter: Counter[str] = Counter()
    for record in records:
        for obj in record.objects:
            counter[obj.label] += 1
    counts = {label: counter[label] for label in sorted(counter)}
    return ClassStats(counts=counts, total=sum(counts.values()))
