"""Axis-aligned boxes, uniform grids and distance bands around boxes."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

_EPS = 1e-12


def _as_vec(v) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"expected a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class Box:
    """Closed axis-aligned box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _as_vec(self.lower), _as_vec(self.upper)
        if lo.shape != hi.shape:
            raise ValueError("corner dimensions differ")
        if lo.size not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if np.any(hi <= lo):
            raise ValueError("upper corner must exceed lower corner on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper)))

    def shrink(self, r: float) -> Box:
        """Omega_r for a box: points farther than r from the boundary."""
        return Box(self.lower + r, self.upper - r)

    def grow(self, pad: float) -> Box:
        return Box(self.lower - pad, self.upper + pad)

    def inflate(self, r: float) -> Band:
        """A^r = A + B_r, the open r-neighbourhood of the box."""
        return Band(self, -np.inf, r)

    def contains(self, x, tol: float = _EPS) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def contains_box(self, other: Box, tol: float = _EPS) -> bool:
        return bool(np.all(other.lower >= self.lower - tol) and np.all(other.upper <= self.upper + tol))

    def signed_distance(self, x) -> np.ndarray:
        """Distance to the box, negative inside (minus the distance to the boundary)."""
        x = np.atleast_2d(x)
        outside = np.maximum(np.maximum(self.lower - x, x - self.upper), 0.0)
        d_out = np.linalg.norm(outside, axis=-1)
        d_in = np.min(np.minimum(x - self.lower, self.upper - x), axis=-1)
        return np.where(d_out > 0, d_out, -d_in)

    def overlap_volume(self, lo, hi) -> np.ndarray:
        """Exact volume of (cells [lo, hi]) intersected with the box, vectorised over rows."""
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        w = np.minimum(hi, self.upper) - np.maximum(lo, self.lower)
        return np.prod(np.clip(w, 0.0, None), axis=-1)

    def intersect(self, other: Box) -> Box | None:
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        if np.any(hi - lo <= _EPS):
            return None
        return Box(lo, hi)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Band:
    """Open set ``{x : low < signed_distance(x, box) < high}``.

    With ``low = -inf`` and ``high = r > 0`` this is the neighbourhood A^r; with
    ``low = -2r, high = r`` it is (Omega minus Omega_r)^r.
    """

    box: Box
    low: float
    high: float

    @property
    def dim(self) -> int:
        return self.box.dim

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        s = self.box.signed_distance(x)
        return (s > self.low - tol) & (s < self.high + tol)

    def bounding_box(self) -> Box:
        pad = max(self.high, 0.0)
        return self.box.grow(pad) if pad > 0 else self.box

    def overlap_volume(self, lo, hi, order: int = 8) -> np.ndarray:
        """Volume of cells intersected with the band.

        Exact in 1D; otherwise a Gauss-Legendre membership count with ``order``
        points per axis, which is exact for cells lying wholly inside or outside.
        """
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        if self.dim == 1:
            return self._overlap_1d(lo[:, 0], hi[:, 0])
        nodes, weights = np.polynomial.legendre.leggauss(order)
        u = 0.5 * (nodes + 1.0)
        grids = np.meshgrid(*([u] * self.dim), indexing="ij")
        ref = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.prod(np.meshgrid(*([0.5 * weights] * self.dim), indexing="ij"), axis=0).ravel()
        out = np.empty(lo.shape[0])
        for i0 in range(0, lo.shape[0], 2048):
            l, h = lo[i0:i0 + 2048], hi[i0:i0 + 2048]
            pts = l[:, None, :] + ref[None] * (h - l)[:, None, :]
            inside = self.contains(pts.reshape(-1, self.dim)).reshape(pts.shape[:2])
            out[i0:i0 + 2048] = (inside * wts).sum(axis=1) * np.prod(h - l, axis=1)
        return out

    def _overlap_1d(self, lo, hi):
        a, b = self.box.lower[0], self.box.upper[0]
        half = 0.5 * (b - a)
        # band in 1D: union of (a - high, a - low) ... expressed through |x - c|
        c = 0.5 * (a + b)
        # signed distance s = |x - c| - half, so low < s < high  <=>  half+low < |x-c| < half+high
        inner = max(half + self.low, 0.0) if np.isfinite(self.low) else 0.0
        outer = half + self.high if np.isfinite(self.high) else np.inf
        if outer <= inner:
            return np.zeros_like(lo)

        def seg(l, h, p, q):
            return np.clip(np.minimum(h, q) - np.maximum(l, p), 0.0, None)

        return seg(lo, hi, c - outer, c - inner) + seg(lo, hi, c + inner, c + outer)

    @property
    def volume(self) -> float:
        """Exact volume for bands with ``low = -inf`` via the Steiner formula."""
        if np.isfinite(self.low):
            return self._steiner(self.high) - self._steiner(self.low)
        return self._steiner(self.high)

    def _steiner(self, t: float) -> float:
        L = self.box.lengths
        if t <= 0:
            inner = L + 2 * t
            return float(np.prod(inner)) if np.all(inner > 0) else 0.0
        n = self.dim
        # sum over faces of dimension k of (k-volume) * (ball volume in n-k dims) * t^(n-k)
        ball = {0: 1.0, 1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0}
        from itertools import combinations
        total = 0.0
        for k in range(n + 1):
            for axes in combinations(range(n), k):
                # 2^(n-k) faces of this orientation, each a k-box spanned by `axes`
                face = float(np.prod(L[list(axes)])) if axes else 1.0
                total += face * ball[n - k] * t ** (n - k)
        return total


@dataclass(frozen=True, eq=False)
class Domain:
    """A box together with a uniform grid of cells."""

    box: Box
    resolution: tuple

    def __post_init__(self):
        res = tuple(int(k) for k in np.broadcast_to(np.asarray(self.resolution), (self.box.dim,)))
        if any(k < 1 for k in res):
            raise ValueError("resolution must be at least 1 per axis")
        object.__setattr__(self, "resolution", res)

    @classmethod
    def from_bounds(cls, lower, upper, resolution) -> Domain:
        return cls(Box(lower, upper), resolution)

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def lower(self) -> np.ndarray:
        return self.box.lower

    @property
    def upper(self) -> np.ndarray:
        return self.box.upper

    @property
    def spacing(self) -> np.ndarray:
        return self.box.lengths / np.asarray(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return self.lower[axis] + h * (np.arange(self.resolution[axis]) + 0.5)

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers, shape (n_cells, N), in C (row-major) order."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        h = self.spacing
        return self.centers - 0.5 * h, self.centers + 0.5 * h

    def refined(self, factor: int) -> Domain:
        return Domain(self.box, tuple(k * factor for k in self.resolution))

    def padded(self, pad: float) -> tuple[Domain, float]:
        """Grow the box by whole cells so that the pad is at least ``pad`` on every side.

        Returns the padded domain and the cell counts added per side (max over axes)."""
        h = self.spacing
        extra = np.ceil(pad / h - 1e-9).astype(int)
        box = Box(self.lower - extra * h, self.upper + extra * h)
        return Domain(box, tuple(np.asarray(self.resolution) + 2 * extra)), extra

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "resolution": list(self.resolution)}


def unit_domain(dim: int, resolution) -> Domain:
    return Domain(Box(np.zeros(dim), np.ones(dim)), resolution)
