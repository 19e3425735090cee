"""Matrix-valued Radon measures on boxes, mollifier kernels and their convolution.

A measure is stored as a piecewise-constant density on a uniform grid (cell
averages) plus a finite list of flat facets carrying the singular part.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, signal

from .errors import KernelError, OutsideSupportError, RecessionUnavailable
from .geometry import Band, Box, Domain
from .quadrature import composite_rule, doubling_quadrature, gauss_legendre

# ---------------------------------------------------------------- kernels


def _bump(s2):
    s2 = np.asarray(s2, dtype=float)
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    out[inside] = np.exp(1.0 / (s2[inside] - 1.0))
    return out


def _wide_bump(s2):
    s2 = np.asarray(s2, dtype=float)
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    out[inside] = np.exp(0.5 / (s2[inside] - 1.0))
    return out


# profiles take the squared radius |x|^2 of the unit-scale argument
PROFILES = {"bump": _bump, "wide_bump": _wide_bump}

_SPHERE_AREA = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}


@lru_cache(maxsize=None)
def profile_mass(profile: str, dim: int) -> float:
    """Integral of the unnormalised profile over the unit ball in R^dim."""
    if profile not in PROFILES:
        raise KernelError(f"unknown kernel profile {profile!r}")
    phi = PROFILES[profile]

    def radial(rho):
        return rho ** (dim - 1) * float(phi(np.array(rho * rho)))

    val, _ = integrate.quad(radial, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    mass = _SPHERE_AREA[dim] * val
    if not np.isfinite(mass) or mass <= 0:
        raise KernelError(f"profile {profile!r} is not integrable")
    # second opinion from a different rule; both must agree before we trust c_N
    check, _ = doubling_quadrature(lambda p: p[:, 0] ** (dim - 1) * phi(p[:, 0] ** 2),
                                   [0.0], [1.0], order=8, tol=1e-14, max_level=14)
    if abs(_SPHERE_AREA[dim] * check - mass) > 1e-10 * mass:
        raise KernelError(f"normalisation of {profile!r} is not reproducible")
    return mass


@dataclass(frozen=True)
class Kernel:
    """alpha_r(x) = c_N r^-N phi(|x/r|^2), supported in the ball of radius r."""

    radius: float
    profile: str
    dim: int
    norm_const: float

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        s2 = np.sum(z * z, axis=-1) / self.radius ** 2
        return self.norm_const * self.radius ** (-self.dim) * PROFILES[self.profile](s2)

    def with_radius(self, r: float) -> Kernel:
        return make_kernel(r, self.profile, self.dim)


def make_kernel(r: float, profile: str = "bump", dim: int = 1) -> Kernel:
    if not np.isfinite(r) or r <= 0:
        raise KernelError(f"kernel radius must be positive, got {r}")
    if dim not in (1, 2, 3):
        raise KernelError("kernel dimension must be 1, 2 or 3")
    return Kernel(float(r), profile, int(dim), 1.0 / profile_mass(profile, dim))


@lru_cache(maxsize=32)
def _stencil(radius: float, profile: str, dim: int, spacing: tuple, offset: tuple | None = None) -> np.ndarray:
    kern = make_kernel(radius, profile, dim)
    h = np.asarray(spacing)
    shift = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
    half = np.ceil((radius + np.abs(shift)) / h + 0.5).astype(int)
    prev = None
    for order in (4, 8, 16, 32, 64):
        if prev is not None and np.prod((2 * half + 1) * order) > 6e7:
            break
        x, w = gauss_legendre(order)
        nodes, weights = [], []
        for a in range(dim):
            offs = np.arange(-half[a], half[a] + 1) * h[a] - shift[a]
            nodes.append((offs[:, None] + 0.5 * h[a] * x[None, :]))
            weights.append(0.5 * h[a] * w)
        st = np.zeros(tuple(2 * half + 1))
        # one slab of cells along the first axis at a time keeps memory bounded
        for i in range(2 * half[0] + 1):
            mesh = np.meshgrid(nodes[0][i], *[nd.ravel() for nd in nodes[1:]], indexing="ij")
            vals = kern(np.stack(mesh, axis=-1)) * weights[0].reshape((-1,) + (1,) * (dim - 1))
            for a in range(1, dim):
                shape = [1] * dim
                shape[a] = -1
                vals = vals * np.tile(weights[a], 2 * half[a] + 1).reshape(shape)
            vals = vals.sum(axis=0)
            if dim > 1:
                new_shape = []
                for a in range(1, dim):
                    new_shape += [2 * half[a] + 1, order]
                vals = vals.reshape(new_shape).sum(axis=tuple(range(1, 2 * (dim - 1), 2)))
            st[i] = vals
        if prev is not None and np.max(np.abs(st - prev)) < 1e-15:
            prev = st
            break
        prev = st
    prev.setflags(write=False)
    return prev


def grid_stencil(kernel: Kernel, spacing, offset=None) -> np.ndarray:
    """Integrals of alpha_r over the grid cells around a cell center.

    Entry ``o`` is the integral of alpha_r(c + offset - y) over the cell offset
    by ``o`` cells.  Without an offset the stencil is symmetric.
    """
    off = None if offset is None or not np.any(offset) else tuple(float(v) for v in np.atleast_1d(offset))
    return _stencil(kernel.radius, kernel.profile, kernel.dim, tuple(float(s) for s in spacing), off)


# ---------------------------------------------------------------- facets


def default_tangents(normal: np.ndarray) -> np.ndarray:
    n = normal.size
    if n == 1:
        return np.zeros((0, 1))
    axis = np.flatnonzero(np.abs(np.abs(normal) - 1.0) < 1e-12)
    if axis.size == 1:
        others = [k for k in range(n) if k != axis[0]]
        return np.eye(n)[others]
    if n == 2:
        return np.array([[-normal[1], normal[0]]])
    j = int(np.argmin(np.abs(normal)))
    t1 = np.eye(3)[j] - normal[j] * normal
    t1 /= np.linalg.norm(t1)
    return np.array([t1, np.cross(normal, t1)])


@dataclass(frozen=True, eq=False)
class Facet:
    """Flat jump patch: a point in 1D, a segment in 2D, a rectangle in 3D.

    ``amplitude`` is the d x N density of the singular part with respect to
    surface measure (``[u] (x) nu`` for SBV jumps).  ``slope`` optionally makes the
    amplitude affine along the tangent axes: amplitude(s) = A + sum_t s_t slope[t],
    with s the tangent coordinates measured from ``center``.  When ``clip`` is set
    only the part of the rectangle inside that box carries mass.
    """

    center: np.ndarray
    normal: np.ndarray
    extent: np.ndarray
    amplitude: np.ndarray
    tangents: np.ndarray | None = None
    slope: np.ndarray | None = None
    clip: Box | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        nu = np.atleast_1d(np.asarray(self.normal, dtype=float))
        dim = c.size
        if nu.size != dim:
            raise ValueError("normal and center dimensions differ")
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise ValueError("facet normal must be a unit vector")
        ext = np.asarray(self.extent, dtype=float).reshape(dim - 1)
        if np.any(ext <= 0):
            raise ValueError("facet extent must be positive")
        amp = np.asarray(self.amplitude, dtype=float)
        if amp.ndim == 1:
            amp = amp.reshape(-1, 1) if dim == 1 else amp[None, :]
        if amp.ndim != 2 or amp.shape[1] != dim:
            raise ValueError(f"amplitude must be d x {dim}")
        tan = default_tangents(nu) if self.tangents is None else np.asarray(self.tangents, dtype=float).reshape(dim - 1, dim)
        if dim > 1:
            gram = np.vstack([tan, nu]) @ np.vstack([tan, nu]).T
            if np.max(np.abs(gram - np.eye(dim))) > 1e-10:
                raise ValueError("tangents must complete the normal to an orthonormal frame")
        slope = None
        if self.slope is not None:
            slope = np.asarray(self.slope, dtype=float).reshape((dim - 1,) + amp.shape)
            if not np.any(slope):
                slope = None
        for name, val in (("center", c), ("normal", nu), ("extent", ext), ("amplitude", amp),
                          ("tangents", tan), ("slope", slope)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def area(self) -> float:
        return float(np.prod(self.extent)) if self.dim > 1 else 1.0

    @property
    def jump(self) -> np.ndarray:
        """Jump vector at the center, recovered as amplitude @ normal."""
        return self.amplitude @ self.normal

    def amplitude_at(self, local) -> np.ndarray:
        local = np.atleast_2d(local)
        out = np.broadcast_to(self.amplitude, (local.shape[0],) + self.amplitude.shape).copy()
        if self.slope is not None:
            out += np.einsum("pt,tij->pij", local, self.slope)
        return out

    def axis_aligned(self) -> bool:
        return bool(np.all(np.abs(np.abs(self.tangents) - np.round(np.abs(self.tangents))) < 1e-14)) and \
            bool(np.all(np.abs(np.abs(self.normal) - np.round(np.abs(self.normal))) < 1e-14))

    def scaled(self, factor: float) -> Facet:
        return Facet(self.center, self.normal, self.extent, factor * self.amplitude, self.tangents,
                     None if self.slope is None else factor * self.slope, self.clip)

    def to_dict(self) -> dict:
        d = {"center": self.center.tolist(), "normal": self.normal.tolist(),
             "extent": self.extent.tolist(), "amplitude": self.amplitude.tolist()}
        if self.dim > 1:
            d["tangents"] = self.tangents.tolist()
        if self.slope is not None:
            d["slope"] = self.slope.tolist()
        if self.clip is not None:
            d["clip"] = self.clip.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Facet:
        clip = d.get("clip")
        return cls(d["center"], d["normal"], d.get("extent", []), d["amplitude"], d.get("tangents"),
                   d.get("slope"), None if clip is None else Box(clip["lower"], clip["upper"]))


# composite Gauss-Legendre (panels, order) across the chord of the kernel ball;
# 16 x 8 integrates the bump profile to ~1e-9 relative
FACET_RULE = {1: (1, 1), 2: (16, 8), 3: (8, 8)}


def _rule(dim, panels, order):
    dp, do = FACET_RULE[dim]
    return panels or dp, order or do


def facet_rule(facet: Facet, region=None, panels: int = 32, order: int = 4):
    """Quadrature over the facet (optionally restricted to a region).

    Returns points (Q, N), weights (Q,) and tangent coordinates (Q, N-1).
    Axis-aligned facets are clipped exactly against Box regions; otherwise nodes
    outside the region are dropped.
    """
    dim = facet.dim
    if dim == 1:
        pts = facet.center[None, :]
        keep = np.ones(1, bool)
        if region is not None:
            keep &= region.contains(pts)
        if facet.clip is not None:
            keep &= facet.clip.contains(pts)
        return pts[keep], np.ones(int(keep.sum())), np.zeros((int(keep.sum()), 0))
    lo = -0.5 * facet.extent
    hi = 0.5 * facet.extent
    mask_needed = facet.clip is not None
    boxes = [b for b in (region if isinstance(region, Box) else None, facet.clip) if b is not None]
    if facet.axis_aligned():
        for b in boxes:
            k = int(np.argmax(np.abs(facet.normal)))
            if not (b.lower[k] - 1e-12 <= facet.center[k] <= b.upper[k] + 1e-12):
                return np.zeros((0, dim)), np.zeros(0), np.zeros((0, dim - 1))
            for t in range(dim - 1):
                a = int(np.argmax(np.abs(facet.tangents[t])))
                sgn = np.sign(facet.tangents[t][a])
                l = (b.lower[a] - facet.center[a]) * sgn
                h = (b.upper[a] - facet.center[a]) * sgn
                l, h = min(l, h), max(l, h)
                lo[t], hi[t] = max(lo[t], l), min(hi[t], h)
        mask_needed = False
        if np.any(hi <= lo):
            return np.zeros((0, dim)), np.zeros(0), np.zeros((0, dim - 1))
    per_axis = [composite_rule(lo[t], hi[t], panels, order) for t in range(dim - 1)]
    grids = np.meshgrid(*[p[0] for p in per_axis], indexing="ij")
    local = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.meshgrid(*[p[1] for p in per_axis], indexing="ij"), axis=0).ravel()
    pts = facet.center + local @ facet.tangents
    keep = np.ones(len(pts), bool)
    if region is not None and (mask_needed or not isinstance(region, Box) or not facet.axis_aligned()):
        keep &= region.contains(pts)
    if mask_needed:
        keep &= facet.clip.contains(pts)
    return pts[keep], wts[keep], local[keep]


def _facet_convolution(facet: Facet, kernel: Kernel, x: np.ndarray, panels: int, order: int) -> np.ndarray:
    """Integral of alpha_r(x - y) over the facet, weighted by its amplitude, for each x."""
    P, dim = x.shape
    panels, order = _rule(dim, panels, order)
    out = np.zeros((P,) + facet.amplitude.shape)
    rel = x - facet.center
    dist = rel @ facet.normal
    r = kernel.radius
    near = np.flatnonzero(np.abs(dist) < r)
    if near.size == 0:
        return out
    if dim == 1:
        out[near] = kernel(rel[near])[:, None, None] * facet.amplitude
        return out
    u, w = composite_rule(0.0, 1.0, panels, order)
    for start in range(0, near.size, 4096):
        idx = near[start:start + 4096]
        a = rel[idx] @ facet.tangents.T
        rho = np.sqrt(np.maximum(r * r - dist[idx] ** 2, 0.0))
        lo = np.maximum(a - rho[:, None], -0.5 * facet.extent)
        hi = np.minimum(a + rho[:, None], 0.5 * facet.extent)
        ok = np.all(hi > lo, axis=1)
        if not np.any(ok):
            continue
        idx, lo, hi = idx[ok], lo[ok], hi[ok]
        width = hi - lo
        s = lo[:, :, None] + width[:, :, None] * u[None, None, :]  # (P', N-1, Q)
        if dim == 2:
            local = s[:, 0, :, None]
            wq = width[:, 0, None] * w[None, :]
        else:
            local = np.stack(np.broadcast_arrays(s[:, 0, :, None], s[:, 1, None, :]), axis=-1)
            local = local.reshape(len(idx), -1, 2)
            wq = (width[:, 0, None, None] * w[None, :, None]) * (width[:, 1, None, None] * w[None, None, :])
            wq = wq.reshape(len(idx), -1)
        y = facet.center + local @ facet.tangents
        kw = kernel(x[idx, None, :] - y) * wq
        if facet.clip is not None:
            kw = kw * facet.clip.contains(y.reshape(-1, dim)).reshape(kw.shape)
        out[idx] = kw.sum(axis=1)[:, None, None] * facet.amplitude
        if facet.slope is not None:
            moments = np.einsum("pq,pqt->pt", kw, local)
            out[idx] += np.einsum("pt,tij->pij", moments, facet.slope)
    return out


# ---------------------------------------------------------------- measures


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    """mu = m L^N + sum of facet measures, on ``domain``.

    ``ac`` holds cell averages of the density, shape ``domain.resolution + (d, N)``;
    ``None`` means no absolutely continuous part.
    """

    domain: Domain
    ac: np.ndarray | None = None
    facets: tuple = ()
    shape: tuple | None = None

    def __post_init__(self):
        dim = self.domain.dim
        shape = self.shape
        if self.ac is not None:
            ac = np.asarray(self.ac, dtype=float)
            if ac.shape[:dim] != self.domain.resolution or ac.ndim != dim + 2:
                raise ValueError(f"ac density must have shape {self.domain.resolution} + (d, N)")
            object.__setattr__(self, "ac", ac)
            shape = ac.shape[dim:]
        facets = tuple(self.facets)
        for f in facets:
            if f.dim != dim:
                raise ValueError("facet dimension differs from the domain")
            if shape is None:
                shape = f.amplitude.shape
            elif f.amplitude.shape != tuple(shape):
                raise ValueError("facet amplitudes must share one matrix shape")
            if not self.domain.box.contains(f.center[None, :], tol=1e-9)[0]:
                raise ValueError("facet center lies outside the domain")
        object.__setattr__(self, "facets", facets)
        object.__setattr__(self, "shape", tuple(shape) if shape is not None else (1, dim))

    @property
    def dim(self) -> int:
        return self.domain.dim

    def ac_values(self) -> np.ndarray:
        if self.ac is None:
            return np.zeros(self.domain.resolution + self.shape)
        return self.ac

    def ac_flat(self) -> np.ndarray:
        return self.ac_values().reshape((self.domain.n_cells,) + self.shape)

    def __add__(self, other: VectorMeasure) -> VectorMeasure:
        if other.domain.box != self.domain.box or other.domain.resolution != self.domain.resolution:
            raise ValueError("measures live on different grids")
        ac = None if self.ac is None and other.ac is None else self.ac_values() + other.ac_values()
        return VectorMeasure(self.domain, ac, self.facets + other.facets, self.shape)

    def scaled(self, factor: float) -> VectorMeasure:
        ac = None if self.ac is None else factor * self.ac
        return VectorMeasure(self.domain, ac, tuple(f.scaled(factor) for f in self.facets), self.shape)

    def singular(self) -> VectorMeasure:
        return VectorMeasure(self.domain, None, self.facets, self.shape)

    # JSON layout: {dimension, domain, grid, shape, ac_density, facets}
    def to_dict(self) -> dict:
        return {
            "dimension": self.dim,
            "domain": self.domain.box.to_dict(),
            "grid": list(self.domain.resolution),
            "shape": list(self.shape),
            "ac_density": None if self.ac is None else self.ac.ravel(order="C").tolist(),
            "facets": [f.to_dict() for f in self.facets],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> VectorMeasure:
        box = Box(d["domain"]["lower"], d["domain"]["upper"])
        if box.dim != d["dimension"]:
            raise ValueError("dimension field disagrees with the domain corners")
        domain = Domain(box, tuple(d["grid"]))
        shape = tuple(d["shape"])
        ac = d.get("ac_density")
        if ac is not None:
            ac = np.asarray(ac, dtype=float).reshape(domain.resolution + shape, order="C")
        return cls(domain, ac, tuple(Facet.from_dict(f) for f in d.get("facets", [])), shape)

    @classmethod
    def from_json(cls, text: str) -> VectorMeasure:
        return cls.from_dict(json.loads(text))


def cell_average(domain: Domain, fn, order: int = 3) -> np.ndarray:
    """Cell averages of a matrix field ``fn(points) -> (P, d, N)`` by Gauss-Legendre."""
    x, w = gauss_legendre(order)
    dim = domain.dim
    h = domain.spacing
    ref = np.stack([g.ravel() for g in np.meshgrid(*([x] * dim), indexing="ij")], axis=-1)
    wts = np.prod(np.meshgrid(*([0.5 * w] * dim), indexing="ij"), axis=0).ravel()
    acc = None
    for q in range(len(wts)):
        vals = np.asarray(fn(domain.centers + 0.5 * h * ref[q]))
        acc = wts[q] * vals if acc is None else acc + wts[q] * vals
    return acc.reshape(domain.resolution + acc.shape[1:])


def measure_from_density(domain: Domain, fn, facets=(), order: int = 3) -> VectorMeasure:
    return VectorMeasure(domain, cell_average(domain, fn, order), tuple(facets))


# ---------------------------------------------------------------- convolution


def _check_support(mu: VectorMeasure, k: Kernel, x: np.ndarray):
    s = mu.domain.box.signed_distance(x)
    bad = s > -k.radius + 1e-12
    if np.any(bad):
        raise OutsideSupportError(
            f"{int(bad.sum())} evaluation point(s) closer than r={k.radius:g} to the boundary; "
            "extend the deformation or pass outside='zero'")


def _ac_pointwise(mu: VectorMeasure, k: Kernel, x: np.ndarray, order: int | None = None) -> np.ndarray:
    dom = mu.domain
    h, lo = dom.spacing, dom.lower
    if order is None:
        # about 160 nodes across the kernel diameter, as for facets
        order = int(min(32, max(8, np.ceil(80 * np.max(h) / k.radius))))
    res = np.asarray(dom.resolution)
    vals = mu.ac_values()
    gx, gw = gauss_legendre(order)
    out = np.zeros((x.shape[0],) + mu.shape)
    for p, xp in enumerate(x):
        first = np.clip(np.floor((xp - k.radius - lo) / h).astype(int), 0, res)
        last = np.clip(np.ceil((xp + k.radius - lo) / h).astype(int), 0, res)
        if np.any(last <= first):
            continue
        nodes, weights = [], []
        for a in range(dom.dim):
            cells = np.arange(first[a], last[a])
            mids = lo[a] + h[a] * (cells + 0.5)
            nodes.append((mids[:, None] + 0.5 * h[a] * gx[None, :]).ravel())
            weights.append(np.tile(0.5 * h[a] * gw, cells.size))
        mesh = np.meshgrid(*nodes, indexing="ij")
        kv = k(xp - np.stack(mesh, axis=-1))
        for a in range(dom.dim):
            shape = [1] * dom.dim
            shape[a] = -1
            kv = kv * weights[a].reshape(shape)
        new_shape = []
        for a in range(dom.dim):
            new_shape += [last[a] - first[a], order]
        cellw = kv.reshape(new_shape).sum(axis=tuple(range(1, 2 * dom.dim, 2)))
        block = vals[tuple(slice(first[a], last[a]) for a in range(dom.dim))]
        out[p] = np.tensordot(cellw, block, axes=dom.dim)
    return out


def convolve(mu: VectorMeasure, k: Kernel, x, *, outside: str = "error",
             panels: int | None = None, order: int | None = None) -> np.ndarray:
    """(mu * alpha_r)(x) for one point (returns d x N) or many points (returns P x d x N).

    ``outside='error'`` rejects points whose kernel ball leaves the domain;
    ``outside='zero'`` treats mu as zero outside its domain.
    """
    if k.dim != mu.dim:
        raise ValueError("kernel and measure dimensions differ")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1 and (mu.dim > 1 or pts.size == 1)
    pts = pts.reshape(-1, mu.dim)
    if outside == "error":
        _check_support(mu, k, pts)
    elif outside != "zero":
        raise ValueError("outside must be 'error' or 'zero'")
    out = np.zeros((pts.shape[0],) + mu.shape)
    if mu.ac is not None:
        out += _ac_pointwise(mu, k, pts)
    for f in mu.facets:
        out += _facet_convolution(f, k, pts, panels, order)
    return out[0] if single else out


def convolve_grid(mu: VectorMeasure, k: Kernel, *, panels: int | None = None,
                  order: int | None = None, cells=None, offset=None) -> np.ndarray:
    """Convolution at the cell centers of ``mu.domain`` (mu taken as zero outside).

    Returns (n_cells, d, N), or only the rows listed in ``cells``.  With ``offset``
    the values are taken at centers + offset (|offset| <= h/2 per axis).
    """
    dom = mu.domain
    centers = dom.centers if cells is None else dom.centers[cells]
    if offset is not None:
        centers = centers + np.asarray(offset, dtype=float)
    out = np.zeros((centers.shape[0],) + mu.shape)
    if mu.ac is not None:
        # correlation with the stencil: value at cell i sums ac[i + o] * stencil[o]
        st = grid_stencil(k, dom.spacing, offset)[(slice(None, None, -1),) * dom.dim]
        vals = mu.ac
        conv = np.empty_like(vals)
        for i in range(mu.shape[0]):
            for j in range(mu.shape[1]):
                comp = vals[..., i, j]
                conv[..., i, j] = signal.fftconvolve(comp, st, mode="same") if np.any(comp) else 0.0
        conv = conv.reshape((dom.n_cells,) + mu.shape)
        out += conv if cells is None else conv[cells]
    for f in mu.facets:
        out += _facet_convolution(f, k, centers, panels, order)
    return out


@dataclass(frozen=True)
class RegionQuadrature:
    """Midpoint-type rule for a region on a grid: whole cells use their centers,
    cells cut by the region boundary use the center of the overlap."""

    cells: np.ndarray          # indices of whole cells
    cell_weights: np.ndarray
    partial_points: np.ndarray
    partial_weights: np.ndarray


def region_quadrature(domain: Domain, region: Box) -> RegionQuadrature:
    lo, hi = domain.cell_bounds()
    vol = region.overlap_volume(lo, hi)
    full = np.isclose(vol, domain.cell_volume, rtol=1e-12, atol=0.0)
    part = (vol > 1e-14 * domain.cell_volume) & ~full
    plo = np.maximum(lo[part], region.lower)
    phi = np.minimum(hi[part], region.upper)
    return RegionQuadrature(np.flatnonzero(full), vol[full], 0.5 * (plo + phi), vol[part])


def convolve_region(mu: VectorMeasure, k: Kernel, region: Box, *, panels: int | None = None,
                    order: int | None = None, outside: str = "error"):
    """Convolution sampled by the region rule of ``region`` on ``mu.domain``.

    Returns (points, weights, values)."""
    rq = region_quadrature(mu.domain, region)
    pts = np.concatenate([mu.domain.centers[rq.cells], rq.partial_points])
    if outside == "error" and len(pts):
        _check_support(mu, k, pts)
    vals_full = convolve_grid(mu, k, panels=panels, order=order, cells=rq.cells)
    if len(rq.partial_points):
        vals_part = convolve(mu, k, rq.partial_points, outside="zero", panels=panels, order=order)
        vals = np.concatenate([vals_full, vals_part.reshape((-1,) + mu.shape)])
    else:
        vals = vals_full
    return pts, np.concatenate([rq.cell_weights, rq.partial_weights]), vals


# ---------------------------------------------------------------- norms and functionals


def _frob(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def _ac_region_weights(mu: VectorMeasure, region) -> np.ndarray:
    lo, hi = mu.domain.cell_bounds()
    if region is None:
        return np.full(mu.domain.n_cells, mu.domain.cell_volume)
    return region.overlap_volume(lo, hi)


def _facets_integral(mu: VectorMeasure, region, fn) -> float:
    total = 0.0
    for f in mu.facets:
        pts, w, local = facet_rule(f, region)
        if len(w):
            total += float(np.dot(w, fn(pts, f.amplitude_at(local))))
    return total


def singular_variation(mu: VectorMeasure, region=None) -> float:
    return _facets_integral(mu, region, lambda pts, amp: _frob(amp))


def total_variation(mu: VectorMeasure, region=None) -> float:
    """|mu|(A) with the Frobenius norm; ``region=None`` means the whole domain."""
    w = _ac_region_weights(mu, region)
    ac = float(np.dot(w, _frob(mu.ac_flat()))) if mu.ac is not None else 0.0
    return ac + singular_variation(mu, region)


def bracket_norm(mu: VectorMeasure, region=None) -> float:
    """<mu>(A) = int_A sqrt(1 + |m|^2) dx + |mu^s|(A)."""
    w = _ac_region_weights(mu, region)
    ac = float(np.dot(w, np.sqrt(1.0 + _frob(mu.ac_flat()) ** 2)))
    return ac + singular_variation(mu, region)


def mass_bound_check(mu: VectorMeasure, k: Kernel, region: Box, tol: float = 1e-6):
    """Compare int_A |mu * alpha_r| with |mu|(A^r) for a box A inside Omega_r."""
    if not mu.domain.box.shrink(k.radius).contains_box(region, tol=1e-12):
        raise OutsideSupportError("the region must lie inside Omega_r")
    _, w, vals = convolve_region(mu, k, region)
    lhs = float(np.dot(w, _frob(vals)))
    rhs = total_variation(mu, region.inflate(k.radius))
    return lhs, rhs, lhs <= rhs + tol


def measure_functional(mu: VectorMeasure, density) -> float:
    """int Phi(x, m) dx + int Phi^inf(x, d mu^s / d|mu^s|) d|mu^s|."""
    centers = mu.domain.centers
    bulk = float(np.sum(density(centers, mu.ac_flat())) * mu.domain.cell_volume)
    if not mu.facets:
        return bulk
    if getattr(density, "bounded", False):
        return bulk
    rec = getattr(density, "recession", None)
    if rec is None:
        raise RecessionUnavailable("the density has no recession function")
    # recession is positively 1-homogeneous, so Phi^inf(x, amp/|amp|) |amp| = Phi^inf(x, amp)
    return bulk + _facets_integral(mu, None, lambda pts, amp: rec(pts, amp))


def pair(mu: VectorMeasure, phi, order: int = 4) -> np.ndarray:
    """int phi dmu for a scalar test function ``phi(points) -> (P,)``; returns d x N."""
    x, w = gauss_legendre(order)
    dom = mu.domain
    total = np.zeros(mu.shape)
    if mu.ac is not None:
        dim = dom.dim
        ref = np.stack([g.ravel() for g in np.meshgrid(*([x] * dim), indexing="ij")], axis=-1)
        wts = np.prod(np.meshgrid(*([0.5 * w] * dim), indexing="ij"), axis=0).ravel()
        avg = sum(wts[q] * phi(dom.centers + 0.5 * dom.spacing * ref[q]) for q in range(len(wts)))
        total += np.tensordot(avg * dom.cell_volume, mu.ac_flat(), axes=1)
    for f in mu.facets:
        pts, fw, local = facet_rule(f, None)
        if len(fw):
            total += np.einsum("q,qij->ij", fw * phi(pts), f.amplitude_at(local))
    return total


def strict_convergence_gap(mu: VectorMeasure, k: Kernel, region: Box) -> tuple[float, float, float]:
    """<(mu * alpha_r) L^N>(A) against <mu>(A); returns (smoothed, target, relative gap).

    Meaningful when |mu|(boundary of A) = 0 and A^r lies inside the domain of mu.
    """
    _, w, vals = convolve_region(mu, k, region)
    smoothed = float(np.dot(w, np.sqrt(1.0 + _frob(vals) ** 2)))
    target = bracket_norm(mu, region)
    return smoothed, target, abs(smoothed - target) / target


def random_measure(seed: int, dim: int = 1, resolution: int = 256, n_facets: int = 3, d: int = 1,
                   margin: float = 0.2, separation: float = 0.1) -> VectorMeasure:
    """Smooth random d x N density plus axis-aligned facets kept ``margin`` away from the unit box boundary."""
    rng = np.random.default_rng(seed)
    shape = (d, dim)
    dom = Domain(Box(np.zeros(dim), np.ones(dim)), resolution)
    freqs = rng.integers(1, 4, (3, dim))
    phases = rng.uniform(0, 2 * np.pi, (3, dim))
    amps = rng.standard_normal((3,) + tuple(shape))

    def density(x):
        out = np.zeros((len(x),) + tuple(shape))
        for f, ph, a in zip(freqs, phases, amps):
            out += np.prod(np.sin(2 * np.pi * f * x + ph), axis=1)[:, None, None] * a
        return out

    facets = []
    while len(facets) < n_facets:
        axis = int(rng.integers(dim))
        c = rng.uniform(margin + 0.05, 1 - margin - 0.05, dim)
        # parallel patches stay well apart so small kernels resolve them
        if any(f.normal[axis] == 1.0 and abs(f.center[axis] - c[axis]) < separation for f in facets):
            continue
        nu = np.eye(dim)[axis]
        ext = rng.uniform(0.1, 1 - 2 * margin - 0.1, dim - 1)
        if dim > 1:
            # keep the patch inside the margin box
            others = [a for a in range(dim) if a != axis]
            c[others] = np.clip(c[others], margin + ext / 2, 1 - margin - ext / 2)
        amp = rng.standard_normal(tuple(shape))
        facets.append(Facet(c, nu, ext, amp))
    return measure_from_density(dom, density, facets, order=3)
