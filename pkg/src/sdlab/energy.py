"""Non-local energies E^{alpha_r}, I^{alpha_r}, the localized energy I and related totals."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .densities import BulkDensity, EnergyDensity, SurfaceDensity
from .errors import QuadratureError
from .geometry import Band, Box, Domain
from .kinematics import SBVFunction, StructuredDeformation, _shell_boxes, extend, limit_measure
from .measure import (Kernel, VectorMeasure, convolve, convolve_grid, facet_rule, gauss_legendre,
                      total_variation)
from .quadrature import doubling_quadrature


@dataclass(frozen=True)
class QuadPlan:
    """Outer quadrature settings for the non-local energies.

    The grid spacing is at most r / cells_per_radius (and at most 1/(2n) of the
    box for an n-cell staircase); every grid cell carries an order^N Gauss rule.
    With ``check`` the integral is repeated on a grid twice as fine and the two
    values must agree to ``check_tol`` (relative).
    """

    cells_per_radius: int = 8
    min_resolution: int = 16
    max_points: int = 4_000_000
    order: int = 4
    check: bool = False
    check_tol: float = 1e-6
    panels: int | None = None
    facet_order: int | None = None

    def refined(self) -> QuadPlan:
        return replace(self, cells_per_radius=2 * self.cells_per_radius, min_resolution=2 * self.min_resolution,
                       check=False)


def _grid_resolution(box: Box, r: float, plan: QuadPlan, feature: float | None = None) -> tuple:
    h = r / plan.cells_per_radius
    if feature is not None:
        h = min(h, feature)
    res = np.maximum(np.ceil(box.lengths / h - 1e-9).astype(int), plan.min_resolution)
    if np.prod(res) * plan.order ** box.dim > plan.max_points:
        raise QuadratureError(f"outer grid {tuple(res)} exceeds the point budget; raise max_points or r")
    return tuple(int(v) for v in res)


def _outer_integral(mu: VectorMeasure, k: Kernel, region: Box, psi, plan: QuadPlan) -> float:
    """int_region Psi(x, (mu * alpha_r)(x)) dx on the grid of ``mu``.

    Whole cells use Gauss nodes obtained by FFT correlation with offset stencils;
    cells cut by the region boundary use Gauss nodes of the overlap box.
    """
    dom = mu.domain
    dim = dom.dim
    gx, gw = gauss_legendre(plan.order)
    ref = np.stack([g.ravel() for g in np.meshgrid(*([gx] * dim), indexing="ij")], axis=-1)
    wts = np.prod(np.meshgrid(*([0.5 * gw] * dim), indexing="ij"), axis=0).ravel()
    lo, hi = dom.cell_bounds()
    vol = region.overlap_volume(lo, hi)
    full = np.flatnonzero(np.isclose(vol, dom.cell_volume, rtol=1e-10, atol=0.0))
    part = np.flatnonzero((vol > 1e-14 * dom.cell_volume) & ~np.isclose(vol, dom.cell_volume, rtol=1e-10, atol=0.0))
    total = 0.0
    h = dom.spacing
    for q in range(len(wts)):
        off = 0.5 * h * ref[q]
        vals = convolve_grid(mu, k, cells=full, offset=off, panels=plan.panels, order=plan.facet_order)
        total += wts[q] * dom.cell_volume * float(np.sum(psi(dom.centers[full] + off, vals)))
    if part.size:
        plo = np.maximum(lo[part], region.lower)
        phi = np.minimum(hi[part], region.upper)
        for q in range(len(wts)):
            pts = 0.5 * (plo + phi) + 0.5 * (phi - plo) * ref[q]
            vals = convolve(mu, k, pts, outside="zero", panels=plan.panels, order=plan.facet_order)
            total += wts[q] * float(np.sum(np.prod(phi - plo, axis=1) * psi(pts, vals)))
    return total


def _checked(compute, plan: QuadPlan) -> float:
    val = compute(plan)
    if plan.check:
        fine = compute(plan.refined())
        if abs(fine - val) > plan.check_tol * max(1.0, abs(fine)):
            raise QuadratureError(f"outer quadrature unstable under refinement: {val!r} vs {fine!r}")
        return fine
    return val


# ---------------------------------------------------------------- E^{alpha_r}(u)


def averaged_energy(u: SBVFunction, psi: EnergyDensity, k: Kernel, plan: QuadPlan | None = None,
                    region: Box | None = None) -> float:
    """E^{alpha_r}(u) = int_{Omega_r} Psi(x, (D^s u * alpha_r)(x)) dx."""
    plan = plan or QuadPlan()
    region = region or u.domain.shrink(k.radius)
    shape = u.gradient(u.domain.center[None, :]).shape[1:]
    n = u.meta.get("n")
    feature = None if n is None else float(np.min(u.domain.lengths)) / (2 * n)

    def compute(p):
        dom = Domain(u.domain, _grid_resolution(u.domain, k.radius, p, feature))
        mu = VectorMeasure(dom, None, u.facets, shape)
        return _outer_integral(mu, k, region, psi, p)

    return _checked(compute, plan)


# ---------------------------------------------------------------- I^{alpha_r}(g, G)


def _limit_on_grid(sd: StructuredDeformation, k: Kernel, plan: QuadPlan, pad: float | None, mode: str):
    res = _grid_resolution(sd.domain, k.radius, plan)
    if pad is None:
        return limit_measure(sd, res)
    h = sd.domain.lengths / np.asarray(res)
    step = float(np.max(h))
    # the extension has to cover the whole r-neighbourhood of Omega
    pad = max(pad, k.radius)
    ext = extend(sd, np.ceil(pad / step - 1e-9) * step, mode)
    big = ext.domain.lengths / h
    if np.any(np.abs(big - np.round(big)) > 1e-6):
        raise QuadratureError("padding is not a whole number of cells on every axis; use a cubic grid")
    return limit_measure(ext, tuple(int(v) for v in np.round(big)))


def upscaled_energy(sd: StructuredDeformation, psi: EnergyDensity, k: Kernel, plan: QuadPlan | None = None, *,
                    extended: bool = False, pad: float | None = None, mode: str = "nearest") -> float:
    """I^{alpha_r}(g, G) evaluated on the limit measure mu = M L^N + D^s g.

    By default the integral runs over Omega_r.  With ``extended`` it runs over all
    of Omega using the extension of (g, G) to a box padded by ``pad`` (default:
    the kernel radius rounded up to whole cells).
    """
    plan = plan or QuadPlan()
    region = sd.domain if extended else sd.domain.shrink(k.radius)

    def compute(p):
        mu = _limit_on_grid(sd, k, p, (pad or k.radius) if extended else None, mode)
        return _outer_integral(mu, k, region, psi, p)

    return _checked(compute, plan)


def boundary_layer(sd: StructuredDeformation, psi: EnergyDensity, k: Kernel, plan: QuadPlan | None = None, *,
                   pad: float | None = None, mode: str = "nearest") -> dict:
    """The Omega minus Omega_r part of the extended energy and its growth bound.

    bound = C_Psi (|Omega \\ Omega_r| + |mu_bar|((Omega \\ Omega_r)^r)).
    """
    plan = plan or QuadPlan()
    r = k.radius
    mu = _limit_on_grid(sd, k, plan, pad or r, mode)
    shells = _shell_boxes(sd.domain.shrink(r), sd.domain)
    value = sum(_outer_integral(mu, k, b, psi, plan) for b in shells)
    layer_volume = sd.domain.volume - sd.domain.shrink(r).volume
    mass = total_variation(mu, Band(sd.domain, -2.0 * r, r))
    C = psi.growth if psi.growth is not None else float("nan")
    bound = C * (layer_volume + mass)
    return {"r": r, "layer_energy": value, "layer_volume": layer_volume, "layer_mass": mass,
            "bound": bound, "ok": bool(abs(value) <= bound + 1e-12)}


# ---------------------------------------------------------------- localized energy


def _bulk_integral(sd: StructuredDeformation, fn, tol: float, region: Box | None = None) -> float:
    region = region or sd.domain
    pieces = sd.M_pieces()
    if pieces is not None:
        total = 0.0
        for b, Mb in pieces:
            b = b.intersect(region)
            if b is None:
                continue
            val, _ = doubling_quadrature(lambda x, Mb=Mb: fn(x, np.broadcast_to(Mb, (len(x),) + Mb.shape)),
                                         b.lower, b.upper, order=4, tol=tol)
            total += float(val)
        return total
    val, _ = doubling_quadrature(lambda x: fn(x, sd.M(x)), region.lower, region.upper,
                                 order=4, tol=tol, start_level=1)
    return float(val)


def localized_breakdown(sd: StructuredDeformation, psi: EnergyDensity, tol: float = 1e-10,
                        region: Box | None = None) -> dict:
    region = region or sd.domain
    bulk = _bulk_integral(sd, psi, tol, region)
    surface = 0.0
    if sd.jumps and not psi.bounded:
        for f in sd.jumps:
            pts, w, local = facet_rule(f, region)
            if len(w):
                surface += float(np.dot(w, psi.recession(pts, f.amplitude_at(local))))
    return {"bulk": bulk, "surface": surface, "total": bulk + surface}


def localized_energy(sd: StructuredDeformation, psi: EnergyDensity, tol: float = 1e-10,
                     region: Box | None = None) -> float:
    """I(g, G) = int Psi(x, grad g - G) + int_{S_g} Psi^inf(x, [g] (x) nu), over ``region`` (default Omega).

    The surface term vanishes for bounded (sublinear) Psi.
    """
    return localized_breakdown(sd, psi, tol, region)["total"]


# ---------------------------------------------------------------- local energy and totals


def _facet_surface(u_facets, psi_s: SurfaceDensity, region: Box) -> float:
    total = 0.0
    for f in u_facets:
        pts, w, local = facet_rule(f, region)
        if len(w):
            lam = np.einsum("pij,j->pi", f.amplitude_at(local), f.normal)
            total += float(np.dot(w, psi_s(pts, lam, np.broadcast_to(f.normal, pts.shape))))
    return total


def local_energy(u: SBVFunction, W: BulkDensity, psi_s: SurfaceDensity, resolution: int = 64,
                 tol: float | None = None) -> dict:
    """E_L(u) = int W(x, grad u) dx + int_{S_u} psi(x, [u], nu_u) dH^{N-1}."""
    dom = Domain(u.domain, resolution)
    gx, gw = gauss_legendre(4)
    dim = dom.dim
    ref = np.stack([g.ravel() for g in np.meshgrid(*([gx] * dim), indexing="ij")], axis=-1)
    wts = np.prod(np.meshgrid(*([0.5 * gw] * dim), indexing="ij"), axis=0).ravel()
    bulk = 0.0
    for q in range(len(wts)):
        pts = dom.centers + 0.5 * dom.spacing * ref[q]
        bulk += wts[q] * dom.cell_volume * float(np.sum(W(pts, u.gradient(pts))))
    surface = _facet_surface(u.facets, psi_s, u.domain)
    return {"bulk": bulk, "surface": surface, "total": bulk + surface}


def reversed_limit(u: SBVFunction, W: BulkDensity, psi_s: SurfaceDensity, psi: EnergyDensity,
                   resolution: int = 64) -> dict:
    """lim_{r->0} of E_L(u) + E^{alpha_r}(u) for a fixed u:
    E_L(u) + int Psi(x, 0) dx + int_{S_u} Psi^inf(x, [u] (x) nu)."""
    el = local_energy(u, W, psi_s, resolution)
    box = u.domain
    shape = u.gradient(box.center[None, :]).shape[1:]
    zero, _ = doubling_quadrature(lambda x: psi(x, np.zeros((len(x),) + shape)), box.lower, box.upper,
                                  order=4, tol=1e-10)
    jump = 0.0
    if not psi.bounded:
        for f in u.facets:
            pts, w, local = facet_rule(f, box)
            if len(w):
                jump += float(np.dot(w, psi.recession(pts, f.amplitude_at(local))))
    nonlocal_part = float(zero) + jump
    return {"local": el["total"], "psi_zero": float(zero), "psi_recession": jump,
            "nonlocal": nonlocal_part, "total": el["total"] + nonlocal_part}


def oneD_reference(sd: StructuredDeformation, psi: EnergyDensity) -> float:
    """int_a^b Psi(x, M(x)) dx + sum over jumps of Psi^inf([g]) by adaptive 1D quadrature."""
    if sd.dim != 1:
        raise ValueError("oneD_reference needs a 1D structured deformation")
    a, b = float(sd.domain.lower[0]), float(sd.domain.upper[0])
    pieces = sd.M_pieces()
    brk = sorted({float(p.lower[0]) for p, _ in pieces} | {float(p.upper[0]) for p, _ in pieces}) if pieces else []
    brk = [t for t in brk if a < t < b]

    def f(t):
        x = np.array([[t]])
        return float(psi(x, sd.M(x))[0])

    val, _ = integrate.quad(f, a, b, points=brk or None, epsabs=1e-13, epsrel=1e-12, limit=200)
    if not psi.bounded:
        for j in sd.jumps:
            val += float(psi.recession(j.center[None, :], j.amplitude[None])[0])
    return float(val)


def total_energy(sd: StructuredDeformation, W: BulkDensity, psi_s: SurfaceDensity, psi: EnergyDensity,
                 mode: str = "closed", resolution: int = 32, seed: int = 0) -> dict:
    """J(g, G) = int H_p(x, grad g, G) + int_{S_g} h_p(x, [g], nu) + I(g, G).

    ``mode='closed'`` needs the convex p = 1 case with psi = c|lambda|; ``mode='upper'``
    uses the laminate upper bound for H_p and flags the total as an upper bound.
    """
    from .cell import CellProblem, cell_value, surface_density_hp

    pieces = _field_pieces(sd)
    bulk = 0.0
    flags = set()
    for b, A, B in pieces:
        prob = CellProblem(b.center, A, B, W.p, W, psi_s)
        res = cell_value(prob, mode=mode, seed=seed)
        flags.add(res["mode"])
        bulk += res["value"] * b.volume
    surface = 0.0
    for f in sd.jumps:
        pts, w, _ = facet_rule(f, sd.domain)
        if len(w):
            h, flag = surface_density_hp(pts[0], f.jump, f.normal, W.p, W, psi_s)
            flags.add(flag)
            surface += h * float(w.sum())
    loc = localized_breakdown(sd, psi)
    total = bulk + surface + loc["total"]
    return {"H_term": bulk, "h_term": surface, "Psi_bulk": loc["bulk"], "Psi_surface": loc["surface"],
            "total": total, "modes": sorted(flags),
            "upper_bound": any(m != "exact" for m in flags)}


def _field_pieces(sd: StructuredDeformation):
    F = sd.g.constant_gradient
    pieces = sd.G.pieces(sd.domain)
    if F is None or pieces is None:
        raise ValueError("total_energy needs affine g and piecewise-constant G")
    return [(b, F, G) for b, G in pieces]


def total_energy_at_radius(sd: StructuredDeformation, W: BulkDensity, psi_s: SurfaceDensity,
                           psi: EnergyDensity, k: Kernel, plan: QuadPlan | None = None,
                           mode: str = "closed", extended: bool = True) -> dict:
    """J^{alpha_r}(g, G) = local relaxed part + I^{alpha_r}(g, G), reported separately."""
    tot = total_energy(sd, W, psi_s, psi, mode)
    local_part = tot["H_term"] + tot["h_term"]
    nonlocal_part = upscaled_energy(sd, psi, k, plan, extended=extended)
    return {"local_part": local_part, "nonlocal_part": nonlocal_part, "total": local_part + nonlocal_part,
            "modes": tot["modes"], "r": k.radius}
