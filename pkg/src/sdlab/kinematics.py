"""Structured deformations (g, G), their SBV approximating sequences and jump measures."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np

from .errors import ISDViolation, SingularGradientError, UnsupportedDeformation
from .geometry import Box, Domain
from .measure import Facet, VectorMeasure, cell_average, default_tangents, facet_rule, total_variation


# ---------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class ConstantField:
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_2d(np.asarray(self.value, dtype=float)))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(self.value, (x.shape[0],) + self.value.shape).copy()

    def pieces(self, box: Box):
        return [(box, self.value)]


@dataclass(frozen=True, eq=False)
class PiecewiseConstantField:
    """Constant matrix on each box of an axis-aligned partition."""

    boxes: tuple
    values: tuple

    def __post_init__(self):
        if len(self.boxes) != len(self.values) or not self.boxes:
            raise ValueError("need one value per box")
        vals = tuple(np.atleast_2d(np.asarray(v, dtype=float)) for v in self.values)
        if len({v.shape for v in vals}) != 1:
            raise ValueError("piece values must share one shape")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "values", vals)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.full((x.shape[0],) + self.values[0].shape, np.nan)
        todo = np.ones(x.shape[0], bool)
        for b, v in zip(self.boxes, self.values):
            hit = todo & b.contains(x)
            out[hit] = v
            todo &= ~hit
        if np.any(todo):
            raise ValueError("point outside every piece of the partition")
        return out

    def pieces(self, box: Box):
        return list(zip(self.boxes, self.values))

    def check_partition(self, box: Box):
        vol = sum(b.volume for b in self.boxes)
        for i, a in enumerate(self.boxes):
            if not box.contains_box(a, tol=1e-9):
                raise ValueError("piece leaves the domain")
            for b in self.boxes[i + 1:]:
                if a.intersect(b) is not None:
                    raise ValueError("pieces overlap")
        if abs(vol - box.volume) > 1e-9 * box.volume:
            raise ValueError("pieces do not cover the domain")


@dataclass(frozen=True, eq=False)
class FunctionField:
    fn: Callable

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(x)), dtype=float)

    def pieces(self, box: Box):
        return None


# ---------------------------------------------------------------- smooth maps


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> b + F x."""

    F: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        b = np.broadcast_to(np.asarray(self.b, dtype=float), (F.shape[0],)).copy()
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "b", b)

    def __call__(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.F.T + self.b

    def jacobian(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(self.F, (x.shape[0],) + self.F.shape).copy()

    @property
    def constant_gradient(self):
        return self.F


@dataclass(frozen=True, eq=False)
class FunctionMap:
    fn: Callable
    jac: Callable

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(x)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return np.asarray(self.jac(np.atleast_2d(x)), dtype=float)

    @property
    def constant_gradient(self):
        return None


def compose_maps(outer, inner):
    """outer o inner, with the chain rule for the Jacobian."""
    if isinstance(outer, AffineMap) and isinstance(inner, AffineMap):
        return AffineMap(outer.F @ inner.F, outer.F @ inner.b + outer.b)
    return FunctionMap(lambda x: outer(inner(x)),
                       lambda x: np.einsum("pij,pjk->pik", outer.jacobian(inner(x)), inner.jacobian(x)))


# ---------------------------------------------------------------- structured deformations


@dataclass(frozen=True, eq=False)
class StructuredDeformation:
    """A pair (g, G) on a box.

    ``g`` is a closed-form smooth map plus optional planar jumps; each jump facet
    cuts the whole box, so g(x) = g_smooth(x) + sum of [g] over the facets whose
    positive side contains x.
    """

    domain: Box
    g: AffineMap | FunctionMap
    G: ConstantField | PiecewiseConstantField | FunctionField
    jumps: tuple = ()
    isd: bool = False
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if isinstance(self.G, PiecewiseConstantField):
            self.G.check_partition(self.domain)
        for f in self.jumps:
            if f.dim != self.dim:
                raise ValueError("jump facet dimension differs from the domain")
            if self.dim > 1:
                pts, w, _ = facet_rule(f, self.domain)
                cross = self.domain.volume / self.domain.lengths[int(np.argmax(np.abs(f.normal)))]
                if not f.axis_aligned() or abs(w.sum() - cross) > 1e-9 * cross:
                    raise UnsupportedDeformation("jumps of g must be axis-aligned planes cutting the whole box")
        if self.isd:
            check_isd(self)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple:
        return self.G(self.domain.center[None, :]).shape[1:]

    def g_value(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = self.g(x)
        for f in self.jumps:
            side = (x - f.center) @ f.normal > 0
            out = out + side[:, None] * f.jump
        return out

    def grad_g(self, x) -> np.ndarray:
        return self.g.jacobian(x)

    def M(self, x) -> np.ndarray:
        return self.grad_g(x) - self.G(x)

    def M_pieces(self):
        """[(box, M)] when M is piecewise constant, else None."""
        F = self.g.constant_gradient
        pieces = self.G.pieces(self.domain)
        if F is None or pieces is None:
            return None
        return [(b, F - v) for b, v in pieces]

    def with_(self, **changes) -> StructuredDeformation:
        kw = dict(domain=self.domain, g=self.g, G=self.G, jumps=self.jumps, isd=self.isd, label=self.label)
        kw.update(changes)
        return StructuredDeformation(**kw)


def sample_points(box: Box, per_axis: int = 5) -> np.ndarray:
    axes = [np.linspace(box.lower[a], box.upper[a], per_axis) for a in range(box.dim)]
    return np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)


def check_isd(sd: StructuredDeformation, per_axis: int = 5, tol: float = 1e-10) -> float:
    """Sampled ISD test: grad g and G invertible with equal determinants. Returns max defect."""
    x = sample_points(sd.domain, per_axis)
    Fg, G = sd.grad_g(x), sd.G(x)
    if Fg.shape[-1] != Fg.shape[-2]:
        raise ISDViolation("ISD needs square gradients")
    dg, dG = np.linalg.det(Fg), np.linalg.det(G)
    if np.any(np.abs(dg) < 1e-12) or np.any(np.abs(dG) < 1e-12):
        raise ISDViolation("singular grad g or G")
    defect = float(np.max(np.abs(dg - dG)))
    if defect > tol:
        raise ISDViolation(f"det grad g - det G = {defect:.3e}")
    return defect


def disarrangement_field(sd: StructuredDeformation) -> Callable:
    return sd.M


def K_field(sd: StructuredDeformation) -> Callable:
    """x -> (grad g(x))^-1 G(x)."""

    def K(x):
        Fg = sd.grad_g(x)
        det = np.linalg.det(Fg)
        if np.any(np.abs(det) < 1e-14):
            raise SingularGradientError("grad g is singular at a sample point")
        return np.linalg.solve(Fg, sd.G(x))

    return K


# ---------------------------------------------------------------- SBV functions


@dataclass(frozen=True, eq=False)
class SBVFunction:
    """Piecewise-smooth map with explicit jump facets.

    Du = gradient L^N + sum over facets of amplitude H^{N-1}.
    """

    domain: Box
    value: Callable
    gradient: Callable
    facets: tuple = ()
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def derivative_measure(self, resolution) -> VectorMeasure:
        dom = Domain(self.domain, resolution)
        return VectorMeasure(dom, cell_average(dom, self.gradient), self.facets)


def singular_part(u: SBVFunction) -> VectorMeasure:
    shape = u.gradient(u.domain.center[None, :]).shape[1:]
    return VectorMeasure(Domain(u.domain, 1), None, u.facets, shape)


def smooth_sbv(sd: StructuredDeformation) -> SBVFunction:
    """g itself as an SBV function."""
    return SBVFunction(sd.domain, sd.g_value, sd.grad_g, sd.jumps, label=f"g[{sd.label}]")


def _grid_snap(x, lower, h, n):
    idx = np.clip(np.floor((x - lower) / h), 0, n - 1)
    return lower + idx * h


def _piece_lookup(pieces, x):
    x = np.atleast_2d(x)
    out = np.full((x.shape[0],) + pieces[0][1].shape, np.nan)
    todo = np.ones(x.shape[0], bool)
    for b, v in pieces:
        hit = todo & b.contains(x)
        out[hit] = v
        todo &= ~hit
    return out


def staircase_approximation(sd: StructuredDeformation, n: int) -> SBVFunction:
    """u_n = g + hbar_n - h with h(x) = M x per piece and hbar_n its grid snap.

    The snap grid has n cells per axis of the domain box.  Gradients satisfy
    grad u_n = G exactly; jumps sit on grid planes, on piece interfaces and on S_g.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    pieces = sd.M_pieces()
    if pieces is None:
        raise UnsupportedDeformation("staircase needs an affine g and a piecewise-constant G")
    box = sd.domain
    dim = box.dim
    lo = box.lower
    h = box.lengths / n
    eye = np.eye(dim)
    facets = list(sd.jumps)

    # grid planes inside a piece: jump M e_j h_j across x_j = lo_j + k h_j
    for b, Mp in pieces:
        for j in range(dim):
            col = Mp[:, j] * h[j]
            if not np.any(col):
                continue
            k0 = int(np.ceil((b.lower[j] - lo[j]) / h[j] + 1e-9))
            k1 = int(np.floor((b.upper[j] - lo[j]) / h[j] - 1e-9))
            others = [a for a in range(dim) if a != j]
            for k in range(k0, k1 + 1):
                c = b.center.copy()
                c[j] = lo[j] + k * h[j]
                facets.append(Facet(c, eye[j], b.lengths[others], np.outer(col, eye[j])))

    # piece interfaces: the residual -M(x - snap(x)) changes with the piece
    for (bp, Mp), (bq, Mq) in product(pieces, pieces):
        for j in range(dim):
            if abs(bp.upper[j] - bq.lower[j]) > 1e-12:
                continue
            others = [a for a in range(dim) if a != j]
            flo = np.maximum(bp.lower, bq.lower)
            fhi = np.minimum(bp.upper, bq.upper)
            if any(fhi[a] - flo[a] <= 1e-12 for a in others):
                continue
            plane = bp.upper[j]
            cuts = []
            for a in others:
                ks = np.arange(np.ceil((flo[a] - lo[a]) / h[a] + 1e-9), np.floor((fhi[a] - lo[a]) / h[a] - 1e-9) + 1)
                cuts.append(np.unique(np.concatenate([[flo[a]], lo[a] + ks * h[a], [fhi[a]]])))
            for cell in product(*[range(len(c) - 1) for c in cuts]):
                c = np.empty(dim)
                c[j] = plane
                ext = []
                for t, a in enumerate(others):
                    c[a] = 0.5 * (cuts[t][cell[t]] + cuts[t][cell[t] + 1])
                    ext.append(cuts[t][cell[t] + 1] - cuts[t][cell[t]])
                eps = 1e-9 * h[j]
                below = _grid_snap(c - eps * eye[j], lo, h, n)
                above = _grid_snap(c + eps * eye[j], lo, h, n)
                jump = -Mq @ (c - above) + Mp @ (c - below)
                slope = np.array([np.outer((Mp - Mq)[:, a], eye[j]) for a in others]).reshape(
                    (dim - 1,) + Mp.shape)
                if not np.any(np.abs(jump) > 1e-15) and not np.any(slope):
                    continue
                facets.append(Facet(c, eye[j], ext, np.outer(jump, eye[j]), slope=slope))

    def value(x):
        x = np.atleast_2d(x)
        Mx = _piece_lookup(pieces, x)
        return sd.g_value(x) - np.einsum("pij,pj->pi", Mx, x - _grid_snap(x, lo, h, n))

    return SBVFunction(box, value, sd.G, tuple(facets), label=f"staircase(n={n})[{sd.label}]",
                       meta={"n": n, "kind": "staircase"})


def deck_of_cards(system, mu: float, gamma: float, x0, n: int, domain: Box) -> SBVFunction:
    """Slip on n-1 parallel planes normal to m approximating the two-level shear.

    ``system`` is an object with unit vectors ``s`` and ``m`` (s . m = 0), or None
    in 1D, where the shear reads g(x) = x0 + mu (x - x0) and G = gamma.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    dim = domain.dim
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (dim,)).copy()
    if system is None:
        if dim != 1:
            raise ValueError("a slip system is needed above one dimension")
        s = m = np.ones(1)
        base = np.array([[gamma]])
    else:
        s, m = np.asarray(system.s, dtype=float), np.asarray(system.m, dtype=float)
        base = np.eye(dim) + gamma * np.outer(s, m)
    corners = sample_points(domain, 2)
    tau = (corners - x0) @ m
    t_min, thick = tau.min(), tau.max() - tau.min()
    step = thick / n
    amp = (mu - gamma) * step * np.outer(s, m)
    facets = []
    if mu != gamma:
        dc = domain.center
        tangents, extent = None, []
        if dim > 1:
            tangents = np.array([s, np.cross(m, s)]) if dim == 3 else default_tangents(m)
            extent = [float(np.sum(np.abs(t) * domain.lengths)) for t in tangents]
        clip = None if dim == 1 or np.all(np.abs(np.abs(m) - np.round(np.abs(m))) < 1e-14) else domain
        for k in range(1, n):
            tk = t_min + k * step
            c = dc + (tk - (dc - x0) @ m) * m
            facets.append(Facet(c, m, extent, amp, tangents, clip=clip))

    def value(x):
        x = np.atleast_2d(x)
        t = (x - x0) @ m
        snap = t_min + np.clip(np.floor((t - t_min) / step), 0, n - 1) * step
        return x0 + (x - x0) @ base.T + (mu - gamma) * snap[:, None] * s

    def gradient(x):
        x = np.atleast_2d(x)
        return np.broadcast_to(base, (x.shape[0],) + base.shape).copy()

    return SBVFunction(domain, value, gradient, tuple(facets), label=f"deck(n={n})",
                       meta={"n": n, "kind": "deck", "thickness": thick})


# ---------------------------------------------------------------- norms and bounds


def sd_norm(sd: StructuredDeformation, resolution: int = 64) -> float:
    """||(g, G)||_SD = ||g||_L1 + |Dg|(Omega) + ||G||_L1 (Frobenius norms)."""
    dom = Domain(sd.domain, resolution)
    from .quadrature import gauss_legendre
    x, w = gauss_legendre(3)
    dim = sd.dim
    ref = np.stack([g.ravel() for g in np.meshgrid(*([x] * dim), indexing="ij")], axis=-1)
    wts = np.prod(np.meshgrid(*([0.5 * w] * dim), indexing="ij"), axis=0).ravel()
    total = 0.0
    for q in range(len(wts)):
        p = dom.centers + 0.5 * dom.spacing * ref[q]
        total += wts[q] * dom.cell_volume * np.sum(
            np.linalg.norm(sd.g_value(p), axis=-1)
            + np.sqrt(np.sum(sd.grad_g(p) ** 2, axis=(-2, -1)))
            + np.sqrt(np.sum(sd.G(p) ** 2, axis=(-2, -1))))
    jumps = sum(float(np.linalg.norm(f.amplitude)) * facet_rule(f, sd.domain)[1].sum() for f in sd.jumps)
    return float(total + jumps)


def tv_constant(dim: int) -> float:
    """Constant C in |Du_n|(Omega) <= C ||(g, G)||_SD for the grid-snap staircase."""
    return 3.0 * (1.0 + np.sqrt(dim))


def total_variation_sbv(u: SBVFunction, resolution: int = 64) -> float:
    return total_variation(u.derivative_measure(resolution))


# ---------------------------------------------------------------- extension


def _shell_boxes(inner: Box, outer: Box) -> list:
    """Disjoint boxes covering outer minus inner."""
    out = []
    lo, hi = outer.lower.copy(), outer.upper.copy()
    for a in range(inner.dim):
        if inner.lower[a] > lo[a]:
            b_hi = hi.copy()
            b_hi[a] = inner.lower[a]
            out.append(Box(lo.copy(), b_hi))
        if inner.upper[a] < hi[a]:
            b_lo = lo.copy()
            b_lo[a] = inner.upper[a]
            out.append(Box(b_lo, hi.copy()))
        lo[a], hi[a] = inner.lower[a], inner.upper[a]
    return out


def extend(sd: StructuredDeformation, pad: float, mode: str = "nearest") -> StructuredDeformation:
    """(gbar, Gbar) on the box grown by ``pad``.

    g keeps its closed form outside (affine g continues affinely) and jump planes
    are prolonged through the pad, so no singular mass appears on the boundary.
    ``mode='nearest'`` extends G by its value at the nearest point of the box;
    ``mode='gradient'`` sets Gbar = grad gbar outside, i.e. no disarrangement there.
    """
    if pad <= 0:
        raise ValueError("pad must be positive")
    box = sd.domain
    big = box.grow(pad)
    jumps = []
    for f in sd.jumps:
        k = int(np.argmax(np.abs(f.normal)))
        if min(abs(f.center[k] - box.lower[k]), abs(f.center[k] - box.upper[k])) < 1e-12:
            raise UnsupportedDeformation("a jump of g lies on the boundary of the domain")
        if f.dim > 1:
            others = [a for a in range(f.dim) if a != k]
            c = f.center.copy()
            c[others] = big.center[others]
            jumps.append(Facet(c, f.normal, big.lengths[others], f.amplitude, f.tangents))
        else:
            jumps.append(f)
    if mode == "nearest":
        if isinstance(sd.G, ConstantField):
            G = sd.G
        elif isinstance(sd.G, PiecewiseConstantField):
            boxes = []
            for b in sd.G.boxes:
                lo, hi = b.lower.copy(), b.upper.copy()
                lo[np.abs(lo - box.lower) < 1e-12] -= pad
                hi[np.abs(hi - box.upper) < 1e-12] += pad
                boxes.append(Box(lo, hi))
            G = PiecewiseConstantField(tuple(boxes), sd.G.values)
        else:
            inner = sd.G
            G = FunctionField(lambda x: inner(np.clip(x, box.lower, box.upper)))
    elif mode == "gradient":
        F = sd.g.constant_gradient
        if F is not None:
            shell = _shell_boxes(box, big)
            G = PiecewiseConstantField(tuple(b for b, _ in sd.G.pieces(box) or [(box, None)]) + tuple(shell),
                                       tuple(v for _, v in sd.G.pieces(box)) + tuple(F for _ in shell)) \
                if sd.G.pieces(box) is not None else None
        else:
            G = None
        if G is None:
            inner, grad = sd.G, sd.grad_g
            G = FunctionField(lambda x: np.where(box.contains(x)[:, None, None], inner(np.clip(x, box.lower, box.upper)),
                                                 grad(x)))
    else:
        raise ValueError("mode must be 'nearest' or 'gradient'")
    return StructuredDeformation(big, sd.g, G, tuple(jumps), False, f"ext({sd.label})")


# ---------------------------------------------------------------- registry


def unit_box(dim: int) -> Box:
    return Box(np.zeros(dim), np.ones(dim))


def affine(F, b=None, G=None, domain: Box | None = None, label: str = "affine") -> StructuredDeformation:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    domain = domain or unit_box(F.shape[1])
    b = np.zeros(F.shape[0]) if b is None else b
    Gf = ConstantField(F if G is None else G)
    return StructuredDeformation(domain, AffineMap(F, b), Gf, (), False, label)


def two_level_shear_1d(mu: float, gamma: float, domain: Box | None = None) -> StructuredDeformation:
    """g(x) = mu x, G = gamma on an interval."""
    domain = domain or unit_box(1)
    return StructuredDeformation(domain, AffineMap([[mu]], [0.0]), ConstantField([[gamma]]), (), False,
                                 f"shear1d(mu={mu},gamma={gamma})")


def two_level_shear(s, m, mu: float, gamma: float, x0=None, domain: Box | None = None) -> StructuredDeformation:
    """g = x0 + (I + mu s(x)m)(x - x0), G = I + gamma s(x)m."""
    s, m = np.asarray(s, dtype=float), np.asarray(m, dtype=float)
    dim = s.size
    domain = domain or unit_box(dim)
    x0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    F = np.eye(dim) + mu * np.outer(s, m)
    return StructuredDeformation(domain, AffineMap(F, x0 - F @ x0), ConstantField(np.eye(dim) + gamma * np.outer(s, m)),
                                 (), dim > 1, f"shear(mu={mu},gamma={gamma})")


def step_jump(jump, position: float, axis: int = 0, F=None, G=None, domain: Box | None = None,
              b=None) -> StructuredDeformation:
    """Affine g plus a single plane jump ``jump`` across x_axis = position; G = grad g by default."""
    jump = np.atleast_1d(np.asarray(jump, dtype=float))
    dim = domain.dim if domain is not None else (np.atleast_2d(F).shape[1] if F is not None else 1)
    domain = domain or unit_box(dim)
    F = np.eye(jump.size, dim) if F is None else np.atleast_2d(np.asarray(F, dtype=float))
    b = np.zeros(F.shape[0]) if b is None else b
    nu = np.eye(dim)[axis]
    c = domain.center.copy()
    c[axis] = position
    others = [a for a in range(dim) if a != axis]
    facet = Facet(c, nu, domain.lengths[others], np.outer(jump, nu))
    return StructuredDeformation(domain, AffineMap(F, b), ConstantField(F if G is None else G), (facet,), False,
                                 f"step(jump={jump.tolist()},at={position})")


def limit_measure(sd: StructuredDeformation, resolution) -> VectorMeasure:
    """mu = (grad g - G) L^N + D^s g on a grid over the domain.

    Cell averages of M are exact when M is piecewise constant on boxes.
    """
    dom = Domain(sd.domain, resolution)
    pieces = sd.M_pieces()
    if pieces is None:
        ac = cell_average(dom, sd.M, order=4)
    else:
        lo, hi = dom.cell_bounds()
        ac = np.zeros((dom.n_cells,) + pieces[0][1].shape)
        for b, Mb in pieces:
            ac += (b.overlap_volume(lo, hi) / dom.cell_volume)[:, None, None] * Mb
        ac = ac.reshape(dom.resolution + pieces[0][1].shape)
    return VectorMeasure(dom, ac, sd.jumps)
