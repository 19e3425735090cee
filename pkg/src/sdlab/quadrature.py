"""Tensor Gauss-Legendre rules and a refinement-doubling integrator used as an oracle."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureError


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_rule(a: float, b: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_rule(breaks: list[np.ndarray], order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of composite rules, one per axis, with panels given by ``breaks``."""
    x, w = gauss_legendre(order)
    per_axis = []
    for b in breaks:
        b = np.asarray(b, dtype=float)
        half = 0.5 * np.diff(b)
        mid = 0.5 * (b[1:] + b[:-1])
        per_axis.append(((mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()))
    nodes = np.meshgrid(*[p[0] for p in per_axis], indexing="ij")
    weights = np.meshgrid(*[p[1] for p in per_axis], indexing="ij")
    pts = np.stack([n.ravel() for n in nodes], axis=-1)
    wts = np.prod(np.stack([v.ravel() for v in weights], axis=0), axis=0)
    return pts, wts


def doubling_quadrature(f, lower, upper, *, breakpoints=None, order: int = 4, tol: float = 1e-12,
                        start_level: int = 0, max_level: int = 10, max_points: int = 4_000_000):
    """Integrate ``f`` over a box by composite Gauss-Legendre, doubling panels until stable.

    ``f`` maps an (P, N) array of points to an array whose leading axis is P.
    ``breakpoints`` optionally gives, per axis, interior points where the integrand
    may be non-smooth; panels never straddle them.
    Returns ``(value, level)``; raises QuadratureError if ``tol`` is not met.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    dim = lower.size
    base = []
    for a in range(dim):
        pts = [lower[a], upper[a]]
        if breakpoints is not None and breakpoints[a] is not None:
            inner = [p for p in np.atleast_1d(breakpoints[a]) if lower[a] < p < upper[a]]
            pts += inner
        base.append(np.unique(np.asarray(pts, dtype=float)))
    prev = None
    for level in range(start_level, max_level + 1):
        k = 2 ** level
        breaks = [np.unique(np.concatenate([np.linspace(b[i], b[i + 1], k + 1) for i in range(len(b) - 1)]))
                  for b in base]
        n_pts = int(np.prod([(len(b) - 1) * order for b in breaks]))
        if n_pts > max_points:
            break
        pts, wts = tensor_rule(breaks, order)
        vals = np.asarray(f(pts))
        est = np.tensordot(wts, vals, axes=(0, 0))
        if prev is not None and np.max(np.abs(est - prev)) <= tol * max(1.0, float(np.max(np.abs(est)))):
            return est, level
        prev = est
    raise QuadratureError(f"doubling quadrature did not reach tol={tol:g}")
