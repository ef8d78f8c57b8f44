"""Uniform 3-D grid, finite-difference derivatives, and trilinear lookup.

Axis order everywhere is (log_KG, T, log_R).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid3", "build_grid", "fd_derivatives", "trilinear", "DEFAULT_BOUNDS", "DEFAULT_COUNTS"]

DEFAULT_BOUNDS = ((2.0, 7.0), (0.0, 3.5), (-4.0, 7.0))
DEFAULT_COUNTS = (35, 100, 200)

AXIS_NAMES = ("log_KG", "T", "log_R")


@dataclass(frozen=True)
class Grid3:
    axes: tuple          # three 1-D monotone-increasing coordinate arrays
    spacing: tuple       # per-axis uniform step

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def size(self):
        n0, n1, n2 = self.shape
        return n0 * n1 * n2

    def meshgrid(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def bounds(self):
        return tuple((float(a[0]), float(a[-1])) for a in self.axes)

    def spec(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds()],
                "counts": list(self.shape),
                "axes": list(AXIS_NAMES)}


def build_grid(bounds=DEFAULT_BOUNDS, counts=DEFAULT_COUNTS) -> Grid3:
    """Uniform axes with spacing (max-min)/(count-1); counts must be >= 4."""
    if len(bounds) != 3 or len(counts) != 3:
        raise ValueError("need three (min,max) pairs and three counts")
    axes, steps = [], []
    for (lo, hi), n in zip(bounds, counts):
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise ValueError(f"degenerate bounds ({lo}, {hi})")
        if n < 4:
            raise ValueError("each axis needs at least 4 nodes for the interior stencil")
        axes.append(np.linspace(lo, hi, int(n)))
        steps.append((hi - lo) / (int(n) - 1))
    return Grid3(axes=tuple(axes), spacing=tuple(steps))


def _first_derivative(field, h, axis):
    out = np.empty_like(field)
    core = (np.take(field, range(2, field.shape[axis]), axis=axis)
            - np.take(field, range(0, field.shape[axis] - 2), axis=axis)) / (2.0 * h)
    sl = [slice(None)] * field.ndim
    sl[axis] = slice(1, -1)
    out[tuple(sl)] = core
    lo = [slice(None)] * field.ndim
    lo[axis] = 0
    lo1 = list(lo); lo1[axis] = 1
    out[tuple(lo)] = (field[tuple(lo1)] - field[tuple(lo)]) / h
    hi = [slice(None)] * field.ndim
    hi[axis] = -1
    hi1 = list(hi); hi1[axis] = -2
    out[tuple(hi)] = (field[tuple(hi)] - field[tuple(hi1)]) / h
    return out


def _second_derivative(field, h, axis):
    out = np.empty_like(field)
    n = field.shape[axis]
    core = (np.take(field, range(2, n), axis=axis)
            - 2.0 * np.take(field, range(1, n - 1), axis=axis)
            + np.take(field, range(0, n - 2), axis=axis)) / (h * h)
    sl = [slice(None)] * field.ndim
    sl[axis] = slice(1, -1)
    out[tuple(sl)] = core
    # boundary faces copy the adjacent interior value
    lo = [slice(None)] * field.ndim
    lo[axis] = 0
    lo1 = list(lo); lo1[axis] = 1
    out[tuple(lo)] = out[tuple(lo1)]
    hi = [slice(None)] * field.ndim
    hi[axis] = -1
    hi1 = list(hi); hi1[axis] = -2
    out[tuple(hi)] = out[tuple(hi1)]
    return out


def fd_derivatives(field: np.ndarray, grid: Grid3) -> dict:
    """Gradient and diagonal Hessian of a field on the grid.

    Central differences in the interior, first-order one-sided at faces;
    boundary second derivatives copy the adjacent interior node.
    """
    if field.shape != grid.shape:
        raise ValueError(f"field shape {field.shape} does not match grid {grid.shape}")
    out = {}
    for axis, name in enumerate(AXIS_NAMES):
        h = grid.spacing[axis]
        out[f"d_{name}"] = _first_derivative(field, h, axis)
        out[f"d2_{name}"] = _second_derivative(field, h, axis)
    return out


def trilinear(grid: Grid3, field: np.ndarray, pts, clamp: bool = True):
    """Trilinear interpolation of ``field`` at points (n, 3) in axis order.

    Points outside the box are clamped to the boundary when ``clamp`` is
    set; otherwise they raise.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError("points must be (n, 3) in (log_KG, T, log_R) order")
    idx = []
    frac = []
    for axis in range(3):
        a = grid.axes[axis]
        x = pts[:, axis]
        if clamp:
            x = np.clip(x, a[0], a[-1])
        elif np.any(x < a[0]) or np.any(x > a[-1]):
            raise ValueError("interpolation point outside grid bounds")
        t = (x - a[0]) / grid.spacing[axis]
        i = np.clip(np.floor(t).astype(int), 0, len(a) - 2)
        idx.append(i)
        frac.append(t - i)
    i0, i1, i2 = idx
    f0, f1, f2 = frac
    acc = np.zeros(pts.shape[0])
    for d0 in (0, 1):
        w0 = np.where(d0, f0, 1.0 - f0)
        for d1 in (0, 1):
            w1 = np.where(d1, f1, 1.0 - f1)
            for d2 in (0, 1):
                w2 = np.where(d2, f2, 1.0 - f2)
                acc += w0 * w1 * w2 * field[i0 + d0, i1 + d1, i2 + d2]
    return acc[()] if acc.size > 1 else float(acc[0])
