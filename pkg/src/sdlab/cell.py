"""Relaxed bulk and surface densities H_p, h_p: closed forms and laminate upper bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import BulkDensity, EnergyDensity, SurfaceDensity, midpoint_convexity_defect, recession
from .errors import ConfigError, ConvexityError


@dataclass(frozen=True, eq=False)
class CellProblem:
    """Data of a bulk cell problem: boundary datum A x, mean gradient B."""

    x0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    p: float
    W: BulkDensity
    psi: SurfaceDensity

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape != B.shape:
            raise ConfigError("A and B must have the same shape")
        if self.p < 1:
            raise ConfigError("p must be at least 1")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))

    @property
    def condition(self) -> str:
        """'mean-zero' competitors (p = 1) or 'zero-gradient' competitors (p > 1)."""
        return "mean-zero" if self.p == 1 else "zero-gradient"


def nuclear_norm(M) -> float:
    return float(np.sum(np.linalg.svd(np.atleast_2d(M), compute_uv=False)))


def _frame_cost(M, V, psi_fn):
    """Cost of M = sum_k Lambda[:, k] (x) V[k] with unit rows V."""
    try:
        Lam = np.linalg.solve(V.T, M.T).T
    except np.linalg.LinAlgError:
        return np.inf, None
    return psi_fn(Lam, V), Lam


def _unit_rows(V):
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def _frame_search(M, psi_fn, trials: int, rng, seeds=()):
    """Random unit-row frames refined by shrinking random perturbations. Returns (cost, V, Lam)."""
    N = M.shape[1]
    best = []
    n_random = max(trials // 2, 1)
    for V in list(seeds) + [_unit_rows(rng.standard_normal((N, N))) for _ in range(n_random)]:
        cost, Lam = _frame_cost(M, V, psi_fn)
        best.append((cost, V, Lam))
    best.sort(key=lambda t: t[0])
    best = best[:5]
    steps = max(trials - n_random, 0)
    out = []
    for cost, V, Lam in best:
        sigma = 0.3
        per = steps // len(best)
        for i in range(per):
            cand = _unit_rows(V + sigma * rng.standard_normal(V.shape))
            c2, L2 = _frame_cost(M, cand, psi_fn)
            if c2 < cost:
                cost, V, Lam = c2, cand, L2
            elif i % 25 == 24:
                sigma = max(sigma * 0.6, 1e-6)
        out.append((cost, V, Lam))
    return min(out, key=lambda t: t[0]) if out else best[0]


def _sum_norms(Lam, V):
    return float(np.sum(np.linalg.norm(Lam, axis=0)))


def dyadic_decomposition_oracle(M, trials: int = 10_000, seed: int = 0) -> float:
    """min over decompositions M = sum_k lambda_k (x) nu_k, |nu_k| = 1, of sum |lambda_k|.

    Frames are sampled at random and refined locally; no singular value
    decomposition is used, so the result is an independent upper bound on the
    nuclear norm.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    N = M.shape[1]
    cost, _, _ = _frame_search(M, _sum_norms, trials, rng, seeds=[np.eye(N)])
    return float(cost)


def H1_convex(x0, A, B, W: BulkDensity, c: float, check_convexity: bool = True) -> float:
    """W(x0, B) + c ||A - B||_* for W convex in its second argument."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not W.convex:
        raise ConvexityError(f"{W.name} is not declared convex")
    if check_convexity and midpoint_convexity_defect(W, B.shape) > 1e-9:
        raise ConvexityError(f"{W.name} fails a sampled midpoint-convexity test")
    return float(W(x0, B)[0]) + c * nuclear_norm(A - B)


def _psi_cost(problem: CellProblem):
    psi, x0 = problem.psi, problem.x0

    def cost(Lam, V):
        lam = Lam.T
        return float(np.sum(psi(x0, lam, V)))

    return cost


def _lamination(W: BulkDensity, x0, B, rng, directions: int = 24, amplitudes=(0.25, 0.5, 1.0, 2.0)):
    """One level of gradient lamination: theta W(B + (1-theta) a(x)n) + (1-theta) W(B - theta a(x)n).

    The volume fraction is optimized by golden-section search for each sampled
    rank-one direction and amplitude.  Returns (value, description).
    """
    base = float(W(x0, B)[0])
    best = (base, None)
    d, N = B.shape
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    dirs = [(np.eye(d)[i], np.eye(N)[j]) for i in range(d) for j in range(N)]
    for _ in range(directions):
        a, n = rng.standard_normal(d), rng.standard_normal(N)
        dirs.append((a / np.linalg.norm(a), n / np.linalg.norm(n)))
    for a, n in dirs:
        for amp in amplitudes:
            D = amp * np.outer(a, n)

            def f(t):
                return t * float(W(x0, B + (1 - t) * D)[0]) + (1 - t) * float(W(x0, B - t * D)[0])

            lo, hi = 0.0, 1.0
            c1, c2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
            f1, f2 = f(c1), f(c2)
            for _ in range(40):
                if f1 < f2:
                    hi, c2, f2 = c2, c1, f1
                    c1 = hi - gr * (hi - lo)
                    f1 = f(c1)
                else:
                    lo, c1, f1 = c1, c2, f2
                    c2 = lo + gr * (hi - lo)
                    f2 = f(c2)
            t = 0.5 * (lo + hi)
            v = f(t)
            if v < best[0] - 1e-14:
                best = (v, {"theta": t, "rank_one": D.tolist()})
    return best


def laminate_upper_bound(problem: CellProblem, depth: int = 3, budget: int = 2000, seed: int = 0,
                         use_svd: bool = True, laminate_gradients: bool | None = None) -> dict:
    """Upper bound for H_p(x0, A, B) over laminate competitors.

    A competitor keeps grad u = B (or a simple gradient laminate of B) and carries
    A - B on at most ``depth`` families of parallel planes with normals nu_k and
    total jumps lambda_k, A - B = sum lambda_k (x) nu_k.  Refining each family
    with n planes of jump lambda_k / n drives the energy to
    W(B) + sum_k psi(x0, lambda_k, nu_k), which is the value reported.
    """
    A, B, x0 = problem.A, problem.B, problem.x0
    M = A - B
    N = M.shape[1]
    rng = np.random.default_rng(seed)
    if laminate_gradients is None:
        laminate_gradients = not problem.W.convex
    if laminate_gradients:
        w_val, lam_desc = _lamination(problem.W, x0, B, rng)
    else:
        w_val, lam_desc = float(problem.W(x0, B)[0]), None
    if not np.any(M):
        return {"value": w_val, "mode": "upper", "surface": 0.0, "bulk": w_val,
                "competitor": {"kind": "affine", "lamination": lam_desc}, "candidates": [w_val]}
    cost = _psi_cost(problem)
    candidates = []
    axis = np.eye(N)
    c_axis, L_axis = _frame_cost(M, axis, cost)
    candidates.append(("axes", c_axis, axis, L_axis))
    if use_svd:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        V = Vt if Vt.shape[0] == N else np.vstack([Vt, np.linalg.svd(Vt)[2][Vt.shape[0]:]])
        c_svd, L_svd = _frame_cost(M, V, cost)
        candidates.append(("svd", c_svd, V, L_svd))
    c_rand, V_rand, L_rand = _frame_search(M, cost, budget, rng, seeds=[axis])
    candidates.append(("search", c_rand, V_rand, L_rand))
    name, surf, V, Lam = min(candidates, key=lambda t: t[1])
    families = [{"normal": V[k].tolist(), "jump": Lam[:, k].tolist()} for k in range(N)
                if np.linalg.norm(Lam[:, k]) > 1e-14][:max(depth, 1)]
    return {"value": w_val + surf, "mode": "upper", "surface": surf, "bulk": w_val,
            "competitor": {"kind": "laminate", "frame": name, "families": families, "lamination": lam_desc},
            "candidates": [w_val + c[1] for c in candidates]}


def surface_density_hp(x0, lam, nu, p: float, W: BulkDensity, psi: SurfaceDensity,
                       zigzag_angles: int = 16) -> tuple[float, str]:
    """h_p(x0, lambda, nu) with a mode flag.

    Densities flagged ``bv_elliptic`` (c |lambda| is one) give psi(x0, lambda, nu)
    exactly.  Otherwise the best of the pure jump, zig-zag interfaces and, for
    p = 1, a diffuse layer costing W^inf(lambda (x) nu) is returned as an upper bound.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if not np.any(lam):
        return 0.0, "exact"
    pure = float(psi(x0, lam, nu)[0])
    if psi.params.get("bv_elliptic", False):
        return pure, "exact"
    best = pure
    if nu.size > 1:
        t = np.linalg.svd(nu[None, :])[2][1]
        for ang in np.linspace(0.05, 1.2, zigzag_angles):
            tilted = [np.cos(ang) * nu + np.sin(ang) * t, np.cos(ang) * nu - np.sin(ang) * t]
            area = 1.0 / np.cos(ang)
            val = 0.5 * area * sum(float(psi(x0, lam, v)[0]) for v in tilted)
            best = min(best, val)
    if p == 1:
        winf = EnergyDensity("W_inf", W.fn)
        best = min(best, float(recession(winf, x0, np.outer(lam, nu))[0]))
    return best, "upper"


def cell_value(problem: CellProblem, mode: str = "closed", seed: int = 0) -> dict:
    """H_p for one cell problem: the convex closed form or a laminate upper bound."""
    exact_ok = problem.W.convex and problem.p == 1 and problem.psi.name == "c_abs_psi"
    if mode == "closed":
        if not exact_ok:
            raise ConfigError("closed form needs p = 1, convex W and psi = c|lambda|")
        val = H1_convex(problem.x0, problem.A, problem.B, problem.W, problem.psi.c)
        return {"value": val, "mode": "exact", "competitor": {"kind": "closed form"}}
    if mode == "upper":
        return laminate_upper_bound(problem, seed=seed)
    raise ConfigError("mode must be 'closed' or 'upper'")
