"""Slip systems, invertible structured deformations and lattice-periodic disarrangement energies."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .densities import EnergyDensity
from .errors import (ConfigError, DependentGenerators, NonNeutralSlip, RangeMismatch)
from .geometry import Box
from .kinematics import (AffineMap, ConstantField, FunctionField, K_field, StructuredDeformation, check_isd,
                         compose_maps, sample_points)
from .kinematics import two_level_shear as _shear

DEFAULT_PERIOD = 1e-4


@dataclass(frozen=True, eq=False)
class SlipSystem:
    s: np.ndarray
    m: np.ndarray
    p: float = DEFAULT_PERIOD
    label: str = ""

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        m = np.asarray(self.m, dtype=float)
        if s.shape != (3,) or m.shape != (3,):
            raise ConfigError("slip direction and normal must be 3-vectors")
        if abs(np.linalg.norm(s) - 1) > 1e-12 or abs(np.linalg.norm(m) - 1) > 1e-12:
            raise ConfigError("slip direction and normal must be unit vectors")
        if abs(s @ m) > 1e-12:
            raise ConfigError("slip direction must lie in the slip plane")
        if self.p <= 0:
            raise ConfigError("slip period must be positive")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "m", m)

    @property
    def dyad(self) -> np.ndarray:
        return np.outer(self.s, self.m)

    def to_dict(self) -> dict:
        return {"s": self.s.tolist(), "m": self.m.tolist(), "p": self.p, "label": self.label}


def _miller(v) -> str:
    return "".join(f"-{abs(int(c))}" if c < 0 else str(int(c)) for c in v)


def fcc_slip_systems(p: float = DEFAULT_PERIOD) -> list[SlipSystem]:
    """The 12 octahedral systems: four {111} planes, three <110> directions in each."""
    normals = [(1, 1, 1), (-1, 1, 1), (1, -1, 1), (1, 1, -1)]
    dirs = [(1, -1, 0), (1, 1, 0), (1, 0, -1), (1, 0, 1), (0, 1, -1), (0, 1, 1)]
    out = []
    for n in normals:
        for d in dirs:
            if np.dot(n, d) == 0:
                out.append(SlipSystem(np.array(d) / np.sqrt(2.0), np.array(n) / np.sqrt(3.0), p,
                                      f"({_miller(n)})[{_miller(d)}]"))
    return out


# ---------------------------------------------------------------- crystallographic states


@dataclass(frozen=True, eq=False)
class CrystallographicState:
    """Slip activities gamma^a on given systems and a macroscopic gradient grad g.

    ``gammas`` holds constants or callables x -> (P,); ``grad_g`` a constant
    matrix or a callable x -> (P, 3, 3).
    """

    systems: tuple
    gammas: tuple
    grad_g: object = None

    def __post_init__(self):
        if len(self.systems) != len(self.gammas):
            raise ConfigError("one slip activity per system")
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "gammas", tuple(self.gammas))

    def _gamma(self, a, x):
        g = self.gammas[a]
        return np.asarray(g(x), dtype=float) if callable(g) else np.full(len(x), float(g))

    def _F(self, x):
        if self.grad_g is None:
            return np.broadcast_to(np.eye(3), (len(x), 3, 3))
        if callable(self.grad_g):
            return np.asarray(self.grad_g(x), dtype=float)
        return np.broadcast_to(np.asarray(self.grad_g, dtype=float), (len(x), 3, 3))

    def slip_sum(self, x) -> np.ndarray:
        """sum_a gamma^a(x) s^a (x) m^a."""
        x = np.atleast_2d(x)
        out = np.zeros((len(x), 3, 3))
        for a, sys in enumerate(self.systems):
            out += self._gamma(a, x)[:, None, None] * sys.dyad
        return out

    def K(self, x) -> np.ndarray:
        return np.eye(3) - self.slip_sum(x)

    def M(self, x) -> np.ndarray:
        """M = sum_a gamma^a grad g s^a (x) m^a."""
        return np.einsum("pij,pjk->pik", self._F(np.atleast_2d(x)), self.slip_sum(x))

    def trace_K(self, x) -> np.ndarray:
        """3 - sum_a gamma^a (s^a . m^a), computed from the slip data rather than from K."""
        x = np.atleast_2d(x)
        out = np.full(len(x), 3.0)
        for a, sys in enumerate(self.systems):
            out -= self._gamma(a, x) * float(sys.s @ sys.m)
        return out

    def to_deformation(self, domain: Box | None = None, x0=None) -> StructuredDeformation:
        """(g, G) with affine g of constant gradient F and G = F K (constant activities only)."""
        if callable(self.grad_g) or any(callable(g) for g in self.gammas):
            raise ConfigError("to_deformation needs constant activities and gradient")
        domain = domain or Box(np.zeros(3), np.ones(3))
        F = np.eye(3) if self.grad_g is None else np.asarray(self.grad_g, dtype=float)
        x0 = domain.center if x0 is None else np.asarray(x0, dtype=float)
        K = self.K(x0[None])[0]
        return StructuredDeformation(domain, AffineMap(F, x0 - F @ x0), ConstantField(F @ K), (), False,
                                     "crystallographic")


def double_slip_determinant(sys1: SlipSystem, g1: float, sys2: SlipSystem, g2: float) -> float:
    """det(I - g1 s1(x)m1 - g2 s2(x)m2) = 1 - g1 g2 (s1.m2)(s2.m1) when s_i . m_i = 0."""
    return 1.0 - g1 * g2 * float(sys1.s @ sys2.m) * float(sys2.s @ sys1.m)


def validate_crystallographic(state: CrystallographicState, per_axis: int = 3, domain: Box | None = None) -> dict:
    domain = domain or Box(np.zeros(3), np.ones(3))
    x = sample_points(domain, per_axis)
    K = state.K(x)
    slip = state.slip_sum(x)
    form_defect = float(np.max(np.abs(K - (np.eye(3) - slip))))
    tr_alg = state.trace_K(x)
    tr_num = np.trace(K, axis1=1, axis2=2)
    det = np.linalg.det(K)
    report = {"form_defect": form_defect,
              "trace": float(tr_alg[0]), "trace_defect": float(np.max(np.abs(tr_alg - 3.0))),
              "trace_numeric_defect": float(np.max(np.abs(tr_num - 3.0))),
              "det_min": float(det.min()), "det_max": float(det.max()),
              "det_defect": float(np.max(np.abs(det - 1.0)))}
    active = [a for a in range(len(state.systems)) if np.any(state._gamma(a, x) != 0)]
    report["active"] = [state.systems[a].label for a in active]
    if len(active) == 2 and not any(callable(state.gammas[a]) for a in active):
        a, b = active
        pred = double_slip_determinant(state.systems[a], state.gammas[a], state.systems[b], state.gammas[b])
        report["double_slip_prediction"] = pred
        report["double_slip_mismatch"] = float(np.max(np.abs(det - pred)))
    report["isd"] = bool(report["det_defect"] < 1e-10 and report["trace_defect"] == 0.0)
    return report


# ---------------------------------------------------------------- two-level shears and composition


def two_level_shear(system: SlipSystem, mu: float, gamma: float, x0=None,
                    domain: Box | None = None) -> StructuredDeformation:
    """g = x0 + (I + mu s(x)m)(x - x0), G = I + gamma s(x)m for one slip system."""
    return _shear(system.s, system.m, mu, gamma, x0, domain)


def identity_sd(domain: Box) -> StructuredDeformation:
    dim = domain.dim
    return StructuredDeformation(domain, AffineMap(np.eye(dim), np.zeros(dim)), ConstantField(np.eye(dim)),
                                 (), True, "identity")


def _range_points(sd: StructuredDeformation, per_axis: int = 4):
    if isinstance(sd.g, AffineMap):
        return sd.g(sample_points(sd.domain, 2))
    return sd.g(sample_points(sd.domain, per_axis))


def compose(outer: StructuredDeformation, inner: StructuredDeformation, per_axis: int = 4) -> StructuredDeformation:
    """(h, H) o (g, G) = (h o g, (H o g) G) for ISDs, with the range and ISD conditions checked."""
    if outer.jumps or inner.jumps:
        raise ConfigError("composition is defined here for continuous g only")
    img = _range_points(inner, per_axis)
    if not np.all(outer.domain.contains(img, tol=1e-9)):
        raise RangeMismatch("g(Omega) leaves the domain of the outer deformation")
    g = compose_maps(outer.g, inner.g)
    if isinstance(outer.G, ConstantField) and isinstance(inner.G, ConstantField):
        G = ConstantField(outer.G.value @ inner.G.value)
    else:
        oG, iG, ig = outer.G, inner.G, inner.g
        G = FunctionField(lambda x: np.einsum("pij,pjk->pik", oG(ig(x)), iG(x)))
    out = StructuredDeformation(inner.domain, g, G, (), False, f"({outer.label})o({inner.label})")
    check_isd(out, per_axis)
    return out.with_(isd=True)


def factorization_defect(sd: StructuredDeformation, per_axis: int = 4) -> float:
    """max |grad g K - G| with K = (grad g)^-1 G, i.e. (g, G) = (g, grad g) o (i, K)."""
    x = sample_points(sd.domain, per_axis)
    rebuilt = np.einsum("pij,pjk->pik", sd.grad_g(x), K_field(sd)(x))
    return float(np.max(np.abs(rebuilt - sd.G(x))))


def slip_neutral(mu: float, system: SlipSystem) -> tuple[bool, int | None]:
    q = mu / system.p
    n = int(np.round(q))
    if abs(q - n) <= 1e-9:
        return True, n
    return False, None


def additivity_residual(M, system: SlipSystem, mu: float) -> np.ndarray:
    """mu s^a (x) (M^T m^a): the failure of M(composite) = M + mu s^a (x) m^a."""
    ok, _ = slip_neutral(mu, system)
    if not ok:
        raise NonNeutralSlip(f"mu = {mu} is not an integer multiple of p = {system.p}")
    M = np.asarray(M, dtype=float)
    return mu * np.outer(system.s, M.T @ system.m)


def composed_disarrangement(M, system: SlipSystem, mu: float) -> np.ndarray:
    """I - K for the composition of (i, I - M) after the completely neutral shear (g_mu, I)."""
    K_shear = np.eye(3) - mu * system.dyad
    return np.eye(3) - K_shear @ (np.eye(3) - np.asarray(M, dtype=float))


def subspace_membership(M, sys_a: SlipSystem, sys_b: SlipSystem, tol: float = 1e-10) -> tuple[bool, dict]:
    """Is M = s (x) m^a + xi (m^a x m^b) (x) m^b with s perpendicular to m^a?"""
    M = np.asarray(M, dtype=float)
    ma, mb = sys_a.m, sys_b.m
    w = np.cross(ma, mb)
    basis_t = np.linalg.svd(ma[None, :])[2][1:]
    cols = [np.outer(t, ma).ravel() for t in basis_t]
    has_xi = np.linalg.norm(w) > 1e-12
    if has_xi:
        cols.append(np.outer(w, mb).ravel())
    A = np.array(cols).T
    coef, *_ = np.linalg.lstsq(A, M.ravel(), rcond=None)
    resid = float(np.linalg.norm(A @ coef - M.ravel()))
    s = coef[0] * basis_t[0] + coef[1] * basis_t[1]
    xi = float(coef[2]) if has_xi else 0.0
    compat = float(np.linalg.norm(M.T @ ma))
    det = float(np.linalg.det(np.eye(3) - M))
    inside = resid <= tol * max(1.0, float(np.linalg.norm(M)))
    return inside, {"s": s.tolist(), "xi": xi, "residual": resid, "compatibility": compat,
                    "det_I_minus_M": det, "volume_ok": abs(det - 1.0) < 1e-10}


# ---------------------------------------------------------------- lattice-periodic energy


@dataclass(frozen=True, eq=False)
class DisarrangementLattice:
    """Integer combinations of the generators p^a s^a (x) m^a."""

    systems: tuple
    generators: np.ndarray = field(init=False)

    def __post_init__(self):
        systems = tuple(self.systems)
        if not systems:
            raise ConfigError("need at least one slip system")
        gens = np.array([s.p * s.dyad.ravel() for s in systems])
        sv = np.linalg.svd(gens, compute_uv=False)
        if sv.min() <= 1e-10 * sv.max():
            raise DependentGenerators("lattice generators are linearly dependent")
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "generators", gens)
        q, r = np.linalg.qr(gens.T)
        object.__setattr__(self, "_q", q)
        object.__setattr__(self, "_r", r)

    @property
    def rank(self) -> int:
        return len(self.systems)

    def nearest(self, M, radius: float) -> tuple[float, np.ndarray | None]:
        """Distance from M to the lattice, if below ``radius``, and the minimizing coefficients.

        Depth-first enumeration over the triangular factor of the generator
        matrix, pruned by the running best distance; exact within ``radius``.
        """
        v = np.asarray(M, dtype=float).ravel()
        y = self._q.T @ v
        perp2 = max(float(v @ v - y @ y), 0.0)
        r = self._r
        k = self.rank
        best = [radius * radius, None]
        if perp2 >= best[0]:
            return float(np.sqrt(perp2)), None
        n = np.zeros(k)

        def search(level, partial):
            # partial: squared residual of rows level+1..k-1
            i = level
            resid = y[i] - r[i, i + 1:] @ n[i + 1:]
            centre = resid / r[i, i]
            span = np.sqrt(max(best[0] - perp2 - partial, 0.0)) / abs(r[i, i])
            lo, hi = int(np.ceil(centre - span)), int(np.floor(centre + span))
            order = sorted(range(lo, hi + 1), key=lambda t: abs(t - centre))
            for t in order:
                d2 = partial + (resid - r[i, i] * t) ** 2
                if perp2 + d2 >= best[0]:
                    continue
                n[i] = t
                if i == 0:
                    best[0], best[1] = perp2 + d2, n.copy()
                else:
                    search(i - 1, d2)

        search(k - 1, 0.0)
        if best[1] is None:
            return float(radius), None
        lattice_point = best[1] @ self.generators
        return float(np.linalg.norm(v - lattice_point)), best[1].astype(int)


def lattice_energy(systems, cap: float | None = None, profile=None, name: str = "lattice_crystal") -> EnergyDensity:
    """Psi_i(M) = rho(dist(M, Lambda)) with rho(t) = min(t, cap) by default.

    Bounded and 1-Lipschitz (for 1-Lipschitz rho), invariant under every lattice
    translation M -> M + n p^a s^a (x) m^a.
    """
    lattice = DisarrangementLattice(tuple(systems))
    if cap is None:
        cap = 0.5 * min(s.p for s in lattice.systems)
    rho = profile or (lambda t: np.minimum(t, cap))

    def fn(x, xi):
        xi = np.asarray(xi, dtype=float)
        flat = xi.reshape(-1, 3, 3)
        out = np.empty(len(flat))
        for i, Mi in enumerate(flat):
            out[i] = rho(lattice.nearest(Mi, cap)[0])
        return out

    return EnergyDensity(name, fn, frozenset({"E", "L"}), cap, 1.0,
                         recession_fn=lambda x, xi: np.zeros(np.shape(xi)[0]), bounded=True,
                         params={"systems": [s.label for s in lattice.systems], "cap": cap})


def naive_sine_density(systems) -> EnergyDensity:
    """sum_a sin^2(pi (s^a . M m^a) / p^a): periodic per system only along its own slip."""
    systems = tuple(systems)

    def fn(x, xi):
        out = np.zeros(len(xi))
        for s in systems:
            out += np.sin(np.pi * np.einsum("i,pij,j->p", s.s, xi, s.m) / s.p) ** 2
        return out

    return EnergyDensity("naive_sine", fn, frozenset({"E", "L"}), float(len(systems)),
                         float(np.pi * sum(1.0 / s.p for s in systems)), bounded=True,
                         recession_fn=lambda x, xi: np.zeros(np.shape(xi)[0]))


def independent_subset(systems, limit: int = 8) -> list[SlipSystem]:
    """Greedy maximal linearly independent subset of the slip dyads, at most ``limit`` long."""
    chosen, rows = [], []
    for s in systems:
        trial = np.array(rows + [s.dyad.ravel()])
        if np.linalg.matrix_rank(trial, tol=1e-10) == len(trial):
            chosen.append(s)
            rows.append(s.dyad.ravel())
        if len(chosen) == limit:
            break
    return chosen


def preset(name: str, p: float = DEFAULT_PERIOD) -> list[SlipSystem]:
    """Named system subsets of the FCC set with independent dyads."""
    fcc = fcc_slip_systems(p)
    if name == "single":
        return [fcc[0]]
    if name == "coplanar_pair":
        return [fcc[0], fcc[1]]
    if name == "cross_slip":
        s0 = fcc[0].s
        partner = next(t for t in fcc[3:] if np.allclose(t.s, s0) or np.allclose(t.s, -s0))
        return [fcc[0], partner]
    if name == "fcc_independent":
        return independent_subset(fcc)
    raise ConfigError(f"unknown preset {name!r}; known: single, coplanar_pair, cross_slip, fcc_independent")


def lattice_crystal(preset_name: str = "coplanar_pair", cap: float | None = None,
                    p: float = DEFAULT_PERIOD) -> EnergyDensity:
    return lattice_energy(preset(preset_name, p), cap)


# ---------------------------------------------------------------- observer and periodicity checks


def random_rotations(count: int, seed: int = 0) -> np.ndarray:
    from scipy.spatial.transform import Rotation
    return Rotation.random(count, random_state=seed).as_matrix()


def frame_indifference_check(psi: EnergyDensity, sd: StructuredDeformation, Q, per_axis: int = 3,
                             wrong: bool = False) -> float:
    """max |Psi((Q grad g)^-1 Q M) - Psi((grad g)^-1 M)| over sample points.

    ``wrong=True`` compares Psi(Q M) with Psi(M) instead (negative control).
    """
    Q = np.asarray(Q, dtype=float)
    x = sample_points(sd.domain, per_axis)
    F, M = sd.grad_g(x), sd.M(x)
    if wrong:
        a, b = psi(x, np.einsum("ij,pjk->pik", Q, M)), psi(x, M)
    else:
        a = psi(x, np.linalg.solve(np.einsum("ij,pjk->pik", Q, F), np.einsum("ij,pjk->pik", Q, M)))
        b = psi(x, np.linalg.solve(F, M))
    return float(np.max(np.abs(a - b)))


def periodicity_check(psi: EnergyDensity, sys_a: SlipSystem, sys_b: SlipSystem, xis=(0.0, 0.37e-4, -1.3e-4),
                      samples: int = 7, ns=range(-2, 3), scale: float | None = None) -> float:
    """max over s in a grid of the plane normal to m^a, xi and n of
    |Psi((s + n p s^a)(x)m^a + xi w(x)m^b) - Psi(s(x)m^a + xi w(x)m^b)|, w = m^a x m^b."""
    ma, mb = sys_a.m, sys_b.m
    w = np.cross(ma, mb)
    t = np.linalg.svd(ma[None, :])[2][1:]
    scale = scale or 3.0 * sys_a.p
    grid = np.linspace(-scale, scale, samples)
    worst = 0.0
    for xi in xis:
        base = []
        for u, v in product(grid, grid):
            s = u * t[0] + v * t[1]
            base.append(np.outer(s, ma) + xi * np.outer(w, mb))
        base = np.array(base)
        ref = psi(None, base)
        for n in ns:
            shifted = base + n * sys_a.p * np.outer(sys_a.s, ma)
            worst = max(worst, float(np.max(np.abs(psi(None, shifted) - ref))))
    return worst
