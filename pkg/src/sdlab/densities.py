"""Energy densities with growth/Lipschitz metadata, recession functions and sampling validators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, GrowthError

CLASS_TAGS = ("E", "L", "both", "neither")


def _frob(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def _as_batch(x, xi):
    """Normalise (x, xi) to shapes (P, N) and (P, d, N)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1, 1, 1)
    elif xi.ndim == 1:
        xi = xi.reshape(-1, 1, 1)
    elif xi.ndim == 2:
        xi = xi[None]
    P, N = xi.shape[0], xi.shape[-1]
    if x is None:
        x = np.zeros((P, N))
    else:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] == 1 and P > 1:
            x = np.broadcast_to(x, (P, x.shape[1]))
    return x, xi


@dataclass(frozen=True, eq=False)
class EnergyDensity:
    """Psi(x, xi) for d x N matrices xi.

    ``fn`` takes points (P, N) and matrices (P, d, N) and returns (P,).
    ``classes`` is a subset of {"E", "L"}; ``growth`` and ``lipschitz`` are the
    declared constants C and L, ``modulus`` the spatial modulus s -> omega(s).
    ``recession_fn`` overrides the numeric recession estimate.
    """

    name: str
    fn: Callable
    classes: frozenset = frozenset()
    growth: float | None = None
    lipschitz: float | None = None
    modulus: Callable | None = None
    recession_fn: Callable | None = None
    bounded: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, x, xi) -> np.ndarray:
        x, xi = _as_batch(x, xi)
        return np.asarray(self.fn(x, xi), dtype=float)

    @property
    def class_tag(self) -> str:
        if {"E", "L"} <= self.classes:
            return "both"
        if self.classes:
            return next(iter(self.classes))
        return "neither"

    def recession(self, x, xi, **kw) -> np.ndarray:
        return recession(self, x, xi, **kw)

    def describe(self) -> dict:
        return {"name": self.name, "class": self.class_tag, "growth": self.growth,
                "lipschitz": self.lipschitz, "bounded": self.bounded,
                "analytic_recession": self.recession_fn is not None, "params": self.params}


@dataclass(frozen=True, eq=False)
class SurfaceDensity:
    """psi(x, lambda, nu) with c |lambda| <= psi <= C |lambda|."""

    name: str
    fn: Callable
    c: float
    C: float
    modulus: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, x, lam, nu) -> np.ndarray:
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        nu = np.atleast_2d(np.asarray(nu, dtype=float))
        P = max(lam.shape[0], nu.shape[0])
        lam = np.broadcast_to(lam, (P, lam.shape[1]))
        nu = np.broadcast_to(nu, (P, nu.shape[1]))
        x = np.zeros((P, nu.shape[1])) if x is None else np.broadcast_to(np.atleast_2d(x), (P, nu.shape[1]))
        return np.asarray(self.fn(x, lam, nu), dtype=float)


@dataclass(frozen=True, eq=False)
class BulkDensity:
    """W(x, A) with growth exponent p >= 1."""

    name: str
    fn: Callable
    p: float = 1.0
    lipschitz: float | None = None
    convex: bool = False
    modulus: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, x, A) -> np.ndarray:
        x, A = _as_batch(x, A)
        return np.asarray(self.fn(x, A), dtype=float)


# ---------------------------------------------------------------- recession


def recession(phi: EnergyDensity, x, xi, *, k_start: int = 10, k_stop: int = 40, tail: int = 8) -> np.ndarray:
    """Phi^inf(x, xi), extended positively 1-homogeneously from the unit sphere.

    Uses the analytic override when present; otherwise the largest ratio
    Phi(x, t u)/t over the last ``tail`` points of t = 2^k, k = k_start..k_stop,
    with u = xi/|xi|.  Ratios still growing at the end of the grid raise GrowthError.
    """
    x, xi = _as_batch(x, xi)
    if phi.recession_fn is not None:
        return np.asarray(phi.recession_fn(x, xi), dtype=float)
    norm = _frob(xi)
    out = np.zeros(xi.shape[0])
    nz = norm > 0
    if not np.any(nz):
        return out
    unit = xi[nz] / norm[nz, None, None]
    ts = 2.0 ** np.arange(k_start, k_stop + 1)
    ratios = np.stack([phi(x[nz], t * unit) / t for t in ts], axis=-1)
    if not np.all(np.isfinite(ratios)):
        raise GrowthError(f"{phi.name}: non-finite ratios on the recession grid")
    head, last = ratios[:, -tail], ratios[:, -1]
    if np.any((last > 4.0 * head) & (last > 1e-6)):
        raise GrowthError(f"{phi.name}: Phi(t xi)/t keeps growing, superlinear density")
    out[nz] = norm[nz] * ratios[:, -tail:].max(axis=-1)
    return out


# ---------------------------------------------------------------- validators


@dataclass(frozen=True)
class SamplePlan:
    seed: int = 0
    samples: int = 2000
    ranges: tuple = (1.0, 10.0, 100.0, 1e4)
    separations: tuple = (1e-2, 1e-5, 1e-8)
    lattice_step: float = 0.25
    t_range: tuple = (2.0 ** 20, 2.0 ** 40)
    t_points: int = 400
    directions: int = 12
    jitter: float = 1e-7
    tail_tol: float = 1e-3
    shape: tuple = (1, 1)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _directions(rng, shape, count):
    out = [np.eye(shape[0] * shape[1])[k].reshape(shape) for k in range(shape[0] * shape[1])]
    while len(out) < count:
        v = rng.standard_normal(shape)
        out.append(v / _frob(v))
    if shape == (1, 1):
        out = [np.ones((1, 1)), -np.ones((1, 1))]
    return np.array(out[:max(count, 2)])


def validate_class_L(phi: EnergyDensity, plan: SamplePlan | None = None) -> dict:
    """Sampled Lipschitz estimate in xi and spatial modulus estimate in x.

    Difference quotients are taken at random anchors and at a lattice of anchors
    (which hits kinks and cusps sitting at simple rational points) for several
    ranges and separations.  With a declared constant the test passes iff the
    estimate is within 5% of it; otherwise iff the estimate does not grow when
    the range widens or the separation shrinks.
    """
    plan = plan or SamplePlan()
    rng = np.random.default_rng(plan.seed)
    shape = plan.shape
    dirs = _directions(rng, shape, plan.directions)
    table = {}
    for R in plan.ranges:
        lat = np.arange(-R, R + 0.5 * plan.lattice_step, plan.lattice_step)
        if lat.size > 4 * plan.samples:
            lat = rng.choice(lat, 4 * plan.samples, replace=False)
        for sep in plan.separations:
            best = 0.0
            for d in dirs:
                s = np.concatenate([rng.uniform(-R, R, plan.samples), lat])
                a = s[:, None, None] * d
                step = sep * d
                for sign in (1.0, -1.0):
                    q = np.abs(phi(None, a + sign * step) - phi(None, a)) / sep
                    best = max(best, float(np.max(q)))
            table[(R, sep)] = best
    est = max(table.values())
    coarse = table[(plan.ranges[0], plan.separations[0])]
    if phi.lipschitz is not None:
        ok = est <= 1.05 * phi.lipschitz
    else:
        ok = est <= 1.05 * coarse
    omega_hat = _spatial_modulus(phi, rng, shape)
    if phi.modulus is not None:
        ok_x = all(v <= 1.05 * phi.modulus(s) + 1e-12 for s, v in omega_hat.items())
    else:
        ok_x = all(v <= 1e-12 for v in omega_hat.values())
    return {"density": phi.name, "L_hat": est, "L_declared": phi.lipschitz,
            "table": {f"R={k[0]:g},sep={k[1]:g}": v for k, v in table.items()},
            "omega_hat": {f"{s:g}": v for s, v in omega_hat.items()},
            "pass": bool(ok and ok_x), "plan": plan.to_dict(), "evidence": "sampled"}


def _spatial_modulus(phi, rng, shape, dim: int | None = None, count: int = 200):
    dim = dim or shape[1]
    out = {}
    for s in (1e-1, 1e-2, 1e-3):
        x = rng.uniform(0, 1, (count, dim))
        step = rng.standard_normal((count, dim))
        step *= s / np.linalg.norm(step, axis=1, keepdims=True)
        xi = rng.standard_normal((count,) + shape) * 3.0
        diff = np.abs(phi(x + step, xi) - phi(x, xi)) / (1.0 + _frob(xi))
        out[s] = float(diff.max())
    return out


def validate_class_E(phi: EnergyDensity, plan: SamplePlan | None = None) -> dict:
    """Sampled check that Phi(x', t xi')/t settles as t grows with x', xi' near x, xi.

    For each direction xi on a net of the unit sphere the ratio is evaluated on a
    dense log-spaced t net over ``plan.t_range`` at jittered (x', xi'); the test
    passes iff every oscillation is below ``plan.tail_tol``.
    """
    plan = plan or SamplePlan()
    rng = np.random.default_rng(plan.seed)
    shape = plan.shape
    dirs = _directions(rng, shape, plan.directions)
    ts = np.geomspace(plan.t_range[0], plan.t_range[1], plan.t_points)
    worst, growth_ok = 0.0, True
    for d in dirs:
        jit = d + plan.jitter * rng.standard_normal((ts.size,) + shape)
        x = 0.5 + plan.jitter * rng.standard_normal((ts.size, shape[1]))
        r = phi(x, ts[:, None, None] * jit) / ts
        if not np.all(np.isfinite(r)):
            growth_ok = False
            break
        worst = max(worst, float(r.max() - r.min()))
    x = rng.uniform(0, 1, (plan.samples, shape[1]))
    xi = rng.standard_normal((plan.samples,) + shape) * rng.choice(plan.ranges, plan.samples)[:, None, None]
    vals = phi(x, xi)
    c_hat = float(np.max(vals / (1.0 + _frob(xi))))
    if phi.growth is not None:
        growth_ok = growth_ok and c_hat <= 1.05 * phi.growth
    ok = growth_ok and worst < plan.tail_tol
    return {"density": phi.name, "tail_oscillation": worst, "C_hat": c_hat, "C_declared": phi.growth,
            "pass": bool(ok), "plan": plan.to_dict(), "evidence": "sampled"}


def validate_declared(phi: EnergyDensity, plan: SamplePlan | None = None) -> dict:
    """Run the validators matching the declared classes."""
    out = {}
    if "L" in phi.classes:
        out["L"] = validate_class_L(phi, plan)
    if "E" in phi.classes:
        out["E"] = validate_class_E(phi, plan)
    out["pass"] = all(r["pass"] for r in out.values())
    return out


def validate_surface(psi: SurfaceDensity, dim: int = 2, d: int = 2, samples: int = 500, seed: int = 0) -> dict:
    """Sampled bounds, 1-homogeneity and subadditivity of psi."""
    rng = np.random.default_rng(seed)
    nu = rng.standard_normal((samples, dim))
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    a = rng.standard_normal((samples, d)) * 3
    b = rng.standard_normal((samples, d)) * 3
    t = rng.uniform(0, 10, samples)
    x = rng.uniform(0, 1, (samples, dim))
    va, vb, vab = psi(x, a, nu), psi(x, b, nu), psi(x, a + b, nu)
    na = np.linalg.norm(a, axis=1)
    bounds = bool(np.all(va >= psi.c * na - 1e-12) and np.all(va <= psi.C * na + 1e-12))
    homog = float(np.max(np.abs(psi(x, t[:, None] * a, nu) - t * va)))
    subadd = float(np.max(vab - va - vb))
    return {"density": psi.name, "bounds": bounds, "homogeneity_defect": homog,
            "subadditivity_excess": subadd,
            "pass": bounds and homog < 1e-9 and subadd < 1e-9}


def midpoint_convexity_defect(W, shape=(2, 2), samples: int = 2000, seed: int = 0, scale: float = 3.0) -> float:
    """max of W((A+B)/2) - (W(A)+W(B))/2 over random pairs; <= 0 for convex W."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((samples,) + tuple(shape)) * scale
    B = rng.standard_normal((samples,) + tuple(shape)) * scale
    return float(np.max(W(None, 0.5 * (A + B)) - 0.5 * (W(None, A) + W(None, B))))


# ---------------------------------------------------------------- concrete densities


def _norm_density(x, xi):
    return _frob(xi)


def frobenius() -> EnergyDensity:
    return EnergyDensity("frobenius", _norm_density, frozenset({"E", "L"}), 1.0, 1.0,
                         recession_fn=_norm_density)


def abs_density() -> EnergyDensity:
    """|xi|; the Frobenius norm for matrix arguments."""
    return EnergyDensity("abs", _norm_density, frozenset({"E", "L"}), 1.0, 1.0, recession_fn=_norm_density)


def sin2_periodic(period: float, component=None) -> EnergyDensity:
    """sin^2(pi |xi| / period), or sin^2(pi xi_ij / period) for ``component=(i, j)``."""
    if period <= 0:
        raise ConfigError("period must be positive")
    if component is None:
        def fn(x, xi):
            return np.sin(np.pi * _frob(xi) / period) ** 2
    else:
        i, j = component

        def fn(x, xi):
            return np.sin(np.pi * xi[:, i, j] / period) ** 2

    return EnergyDensity("sin2_periodic", fn, frozenset({"E", "L"}), 1.0, np.pi / period,
                         recession_fn=lambda x, xi: np.zeros(np.shape(xi)[0]), bounded=True,
                         params={"period": period, "component": None if component is None else list(component)})


def sawtooth_nodes(limit: float) -> np.ndarray:
    """1, 2, 8, 48, ... (each node is 2n times the previous), up to the first node >= limit."""
    nodes, n = [1.0], 1
    while nodes[-1] < limit:
        nodes.append(2.0 * n * nodes[-1])
        n += 1
    return np.array(nodes)


def sawtooth_value(s) -> np.ndarray:
    """Tent function between consecutive nodes: 0 at every node, slope +-1, zero on [0, 1]."""
    s = np.abs(np.asarray(s, dtype=float))
    nodes = sawtooth_nodes(max(float(np.max(s, initial=1.0)), 1.0) * 2.0 + 2.0)
    k = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, len(nodes) - 2)
    lo, hi = nodes[k], nodes[k + 1]
    val = np.minimum(s - lo, hi - s)
    return np.where(s <= 1.0, 0.0, val)


def sawtooth_remark() -> EnergyDensity:
    """Lipschitz density whose ratio Psi(t)/t has no limit: 0 at the nodes, near 1 at midpoints.

    Defined on xi >= 0 and extended evenly to xi < 0.
    """

    def fn(x, xi):
        return sawtooth_value(xi[:, 0, 0])

    return EnergyDensity("sawtooth_remark", fn, frozenset({"L"}), 1.0, 1.0)


def sqrt_periodic_value(s) -> np.ndarray:
    w = np.mod(np.asarray(s, dtype=float) + 1.0, 2.0) - 1.0
    return np.sqrt(np.clip(1.0 - w * w, 0.0, None))


def sqrt_periodic_remark() -> EnergyDensity:
    """sqrt(1 - xi^2) on [-1, 1] repeated with period 2: bounded, not Lipschitz at odd integers."""

    def fn(x, xi):
        return sqrt_periodic_value(xi[:, 0, 0])

    return EnergyDensity("sqrt_periodic_remark", fn, frozenset({"E"}), 1.0, None,
                         recession_fn=lambda x, xi: np.zeros(np.shape(xi)[0]), bounded=True)


def quadratic_W() -> BulkDensity:
    return BulkDensity("quadratic_W", lambda x, A: _frob(A) ** 2, p=2.0, convex=True)


def area_W() -> BulkDensity:
    """sqrt(1 + |A|^2): convex with linear growth."""
    return BulkDensity("area_W", lambda x, A: np.sqrt(1.0 + _frob(A) ** 2), p=1.0, lipschitz=1.0, convex=True)


def double_well_W(well=1.0, slope: float = 1.0) -> BulkDensity:
    """Non-convex linear-growth density min(|A - a|, |A + a|) with a = well * e1 (x) e1."""

    def fn(x, A):
        a = np.zeros(A.shape[1:])
        a[0, 0] = well
        return slope * np.minimum(_frob(A - a), _frob(A + a))

    return BulkDensity("double_well_W", fn, p=1.0, lipschitz=slope, convex=False,
                       params={"well": well, "slope": slope})


def c_abs_psi(c: float = 1.0) -> SurfaceDensity:
    if c <= 0:
        raise ConfigError("c must be positive")
    return SurfaceDensity("c_abs_psi", lambda x, lam, nu: c * np.linalg.norm(lam, axis=-1), c, c, params={"c": c, "bv_elliptic": True})


def quadratic_density() -> EnergyDensity:
    """|xi|^2, used as a negative control for the validators."""
    return EnergyDensity("quadratic", lambda x, xi: _frob(xi) ** 2)


_REGISTRY = {
    "abs": abs_density,
    "frobenius": frobenius,
    "sin2_periodic": sin2_periodic,
    "sawtooth_remark": sawtooth_remark,
    "sqrt_periodic_remark": sqrt_periodic_remark,
    "quadratic_W": quadratic_W,
    "area_W": area_W,
    "double_well_W": double_well_W,
    "c_abs_psi": c_abs_psi,
    "quadratic": quadratic_density,
}


def builtin(name: str, **params):
    """Look up a density by name; ``lattice_crystal`` forwards params to the crystal module."""
    if name == "lattice_crystal":
        from .crystal import lattice_crystal
        return lattice_crystal(**params)
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown density {name!r}; known: {sorted(_REGISTRY) + ['lattice_crystal']}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None


def from_config(desc) -> EnergyDensity | SurfaceDensity | BulkDensity:
    """``"abs"`` or ``{"name": "sin2_periodic", "period": 0.8}``."""
    if isinstance(desc, str):
        return builtin(desc)
    if not isinstance(desc, dict) or "name" not in desc:
        raise ConfigError("density entry must be a name or a mapping with 'name'")
    params = {k: v for k, v in desc.items() if k != "name"}
    if "component" in params and params["component"] is not None:
        params["component"] = tuple(params["component"])
    return builtin(desc["name"], **params)
