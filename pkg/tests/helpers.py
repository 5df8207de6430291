"""Shared test oracles and generators, independent of the library code paths
they check."""

from __future__ import annotations

import numpy as np

from boxkit.geometry import BoundingBox


def raster_iou(a: BoundingBox, b: BoundingBox, resolution: int = 100) -> float:
    """Pixel-count IoU on a resolution x resolution grid over the unit square.

    A pixel belongs to a box when its center does. For boxes whose corners
    lie on the grid this count is exact, so it is a full-strength oracle
    for the analytic intersection/union arithmetic.
    """
    centers = (np.arange(resolution) + 0.5) / resolution
    ax = (centers >= a.xmin) & (centers < a.xmax)
    ay = (centers >= a.ymin) & (centers < a.ymax)
    bx = (centers >= b.xmin) & (centers < b.xmax)
    by = (centers >= b.ymin) & (centers < b.ymax)
    in_a = np.outer(ax, ay)
    in_b = np.outer(bx, by)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def random_grid_box(rng: np.random.Generator, resolution: int = 100) -> BoundingBox:
    """Random box with integer-pixel corners in a resolution-sized image,
    normalized to [0, 1]. Can be small, large, or thin, never inverted."""
    x1, x2 = sorted(rng.integers(0, resolution + 1, size=2))
    y1, y2 = sorted(rng.integers(0, resolution + 1, size=2))
    return BoundingBox(x1 / resolution, y1 / resolution, x2 / resolution, y2 / resolution)


def random_box(rng: np.random.Generator, min_dim: float = 0.0) -> BoundingBox:
    """Random box with continuous coordinates and dimensions >= min_dim."""
    w = rng.uniform(min_dim, 1.0)
    h = rng.uniform(min_dim, 1.0)
    x = rng.uniform(0.0, 1.0 - w)
    y = rng.uniform(0.0, 1.0 - h)
    return BoundingBox(x, y, x + w, y + h)
