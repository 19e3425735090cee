"""Sweeps behind the CLI subcommands.  Each returns a Report of CSV rows plus named checks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cell as cellmod
from . import crystal as cr
from .config import ExperimentConfig, build_deformation
from .densities import SamplePlan, builtin, from_config, validate_class_E, validate_class_L
from .energy import (averaged_energy, boundary_layer, localized_energy, reversed_limit, total_energy,
                     upscaled_energy)
from .errors import ConfigError, GrowthError
from .kinematics import K_field, staircase_approximation
from .measure import make_kernel


@dataclass
class Report:
    experiment: str
    columns: list
    rows: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def add(self, **row):
        self.rows.append([row[c] for c in self.columns])

    def check(self, name: str, value: float, tol: float, ok: bool | None = None, **extra):
        ok = bool(value <= tol) if ok is None else bool(ok)
        self.checks[name] = {"value": float(value), "tol": float(tol), "pass": ok, **extra}

    @property
    def all_pass(self) -> bool:
        return all(c["pass"] for c in self.checks.values())


def _rel(a, b) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def monotone_decreasing(errors, floor: float = 0.0) -> bool:
    """Non-increasing, ignoring wiggles where both neighbours are already below ``floor``."""
    errors = list(errors)
    return all(b <= a or max(a, b) <= floor for a, b in zip(errors, errors[1:]))


def _setup(cfg: ExperimentConfig):
    sd = build_deformation(cfg.deformation)
    psi = from_config(cfg.densities[0])
    return sd, psi


def run_upscale(cfg: ExperimentConfig) -> Report:
    sd, psi = _setup(cfg)
    plan = cfg.plan()
    rep = Report("upscale", ["n", "r", "E_alpha_r", "I_alpha_r", "abs_err", "rel_err"])
    floor = cfg.checks.get("monotone_floor", 1e-12)
    for r in cfg.r_grid:
        k = make_kernel(r, cfg.kernel, sd.dim)
        I = upscaled_energy(sd, psi, k, plan)
        errs = []
        for n in cfg.n_grid:
            E = averaged_energy(staircase_approximation(sd, int(n)), psi, k, plan)
            errs.append(abs(E - I))
            rep.add(n=int(n), r=r, E_alpha_r=E, I_alpha_r=I, abs_err=abs(E - I), rel_err=_rel(E, I))
        rep.check(f"rel_err_final[r={r:g}]", _rel(E, I), cfg.checks.get("rel_tol", 5e-3))
        mono = monotone_decreasing(errs, floor * max(1.0, abs(I)))
        rep.check(f"monotone[r={r:g}]", float(not mono), 0.0, mono, floor=floor)
    return rep


def run_localize(cfg: ExperimentConfig) -> Report:
    sd, psi = _setup(cfg)
    plan = cfg.plan()
    pad = cfg.params.get("pad")
    mode = cfg.params.get("mode", "nearest")
    with_layer = cfg.params.get("boundary_layer", False)
    cols = ["r", "I_alpha_r", "target_omega_r", "rel_err", "I_extended", "target", "rel_err_extended"]
    if with_layer:
        cols += ["layer_energy", "layer_bound"]
    rep = Report("localize", cols)
    target = localized_energy(sd, psi)
    for r in sorted(cfg.r_grid, reverse=True):
        k = make_kernel(r, cfg.kernel, sd.dim)
        inner = sd.domain.shrink(r)
        I = upscaled_energy(sd, psi, k, plan)
        t_r = localized_energy(sd, psi, region=inner)
        Ie = upscaled_energy(sd, psi, k, plan, extended=True, pad=pad, mode=mode)
        row = dict(r=r, I_alpha_r=I, target_omega_r=t_r, rel_err=_rel(I, t_r), I_extended=Ie, target=target,
                   rel_err_extended=_rel(Ie, target))
        if with_layer:
            bl = boundary_layer(sd, psi, k, plan, pad=pad, mode=mode)
            row.update(layer_energy=bl["layer_energy"], layer_bound=bl["bound"])
            rep.check(f"layer_bound[r={r:g}]", bl["layer_energy"] - bl["bound"], 1e-12)
        rep.add(**row)
    tol = cfg.checks.get("rel_tol", 1e-2)
    rep.check("rel_err_smallest_r", rep.rows[-1][cols.index("rel_err")], tol)
    rep.check("rel_err_extended_smallest_r", rep.rows[-1][cols.index("rel_err_extended")], tol)
    rep.info["localized_energy"] = target
    return rep


def run_iterate(cfg: ExperimentConfig) -> Report:
    """Full n x r table: lim_n E^{alpha_r}(u_n) = I^{alpha_r}, then r -> 0."""
    sd, psi = _setup(cfg)
    plan = cfg.plan()
    rep = Report("iterate", ["n", "r", "E_alpha_r", "I_alpha_r", "rel_err_n", "target_omega_r", "rel_err_r"])
    rs = sorted(cfg.r_grid, reverse=True)
    last = None
    for r in rs:
        k = make_kernel(r, cfg.kernel, sd.dim)
        I = upscaled_energy(sd, psi, k, plan)
        t_r = localized_energy(sd, psi, region=sd.domain.shrink(r))
        for n in cfg.n_grid:
            E = averaged_energy(staircase_approximation(sd, int(n)), psi, k, plan)
            rep.add(n=int(n), r=r, E_alpha_r=E, I_alpha_r=I, rel_err_n=_rel(E, I), target_omega_r=t_r,
                    rel_err_r=_rel(E, t_r))
        rep.check(f"inner_limit[r={r:g}]", _rel(E, I), cfg.checks.get("inner_tol", 5e-3))
        last = (E, t_r)
    rep.check("iterated_limit", _rel(*last), cfg.checks.get("rel_tol", 1e-2))
    return rep


def run_reversed(cfg: ExperimentConfig) -> Report:
    """Both limit orders side by side: r -> 0 at fixed n, and n -> infinity first."""
    sd, psi = _setup(cfg)
    plan = cfg.plan()
    W = builtin(cfg.params.get("W", "quadratic_W"))
    psi_s = builtin("c_abs_psi", c=cfg.params.get("c", 1.0))
    rep = Report("reversed", ["n", "r", "E_reversed", "reversed_target", "I_iterated", "iterated_target"])
    vol = sd.domain.volume
    iter_target = localized_energy(sd, psi)
    tol = cfg.checks.get("rel_tol", 1e-2)
    rs = sorted(cfg.r_grid, reverse=True)
    for n in cfg.n_grid:
        u = staircase_approximation(sd, int(n))
        rev_target = reversed_limit(u, W, psi_s, psi, resolution=max(64, 2 * int(n)))["nonlocal"]
        for r in rs:
            k = make_kernel(r, cfg.kernel, sd.dim)
            E = averaged_energy(u, psi, k, plan)
            Ii = upscaled_energy(sd, psi, k, plan)
            rep.add(n=int(n), r=r, E_reversed=E, reversed_target=rev_target, I_iterated=Ii,
                    iterated_target=iter_target)
        rep.check(f"reversed[n={int(n)}]", abs(E - rev_target) / vol, tol)
    rep.check("iterated", abs(Ii - iter_target) / max(abs(iter_target), vol), tol)
    rep.info["order_gap"] = iter_target - rev_target
    return rep


# ---------------------------------------------------------------- crystal battery


def crystal_battery(seed: int = 0, rotations: int = 100, p: float = cr.DEFAULT_PERIOD,
                    gammas=(0.1, 0.1), generated: int = 20, deformations_count: int = 10,
                    preset: str = "fcc_independent") -> list[tuple]:
    """(name, value, tol, pass) rows for the crystallographic invariants."""
    rows = []
    rng = np.random.default_rng(seed)
    fcc = cr.fcc_slip_systems(p)

    def add(name, value, tol, ok=None):
        rows.append((name, float(value), float(tol), bool(value <= tol) if ok is None else bool(ok)))

    # single slip, every system
    worst_tr = worst_det = 0.0
    for sys in fcc:
        rep = cr.validate_crystallographic(cr.CrystallographicState((sys,), (gammas[0],)))
        worst_tr = max(worst_tr, rep["trace_defect"], rep["trace_numeric_defect"])
        worst_det = max(worst_det, rep["det_defect"])
    add("single_slip_trace", worst_tr, 1e-12)
    add("single_slip_det", worst_det, 1e-12)
    # cross slip: same direction, two planes
    cross_tr = cross_det = 0.0
    for a in fcc:
        for b in fcc:
            if b is not a and np.allclose(np.abs(a.s @ b.s), 1.0) and not np.allclose(np.abs(a.m @ b.m), 1.0):
                rep = cr.validate_crystallographic(cr.CrystallographicState((a, b), gammas))
                cross_tr = max(cross_tr, rep["trace_defect"], rep["trace_numeric_defect"])
                cross_det = max(cross_det, rep["det_defect"])
    add("cross_slip_trace", cross_tr, 1e-12)
    add("cross_slip_det", cross_det, 1e-12)
    # double slip determinant defect against the closed form
    s1 = cr.SlipSystem(np.array([1.0, -1.0, 0.0]) / np.sqrt(2), np.array([1.0, 1.0, 1.0]) / np.sqrt(3), p)
    s2 = cr.SlipSystem(np.array([1.0, 1.0, 0.0]) / np.sqrt(2), np.array([-1.0, 1.0, 1.0]) / np.sqrt(3), p)
    rep = cr.validate_crystallographic(cr.CrystallographicState((s1, s2), gammas))
    add("double_slip_det_formula", rep["double_slip_mismatch"], 1e-12)
    add("double_slip_det_value", abs(rep["det_max"] - (1 + 2.0 / 3.0 * gammas[0] * gammas[1])), 1e-12)
    worst = 0.0
    for _ in range(generated):
        i, j = rng.choice(len(fcc), 2, replace=False)
        g1, g2 = rng.uniform(-0.5, 0.5, 2)
        r2 = cr.validate_crystallographic(cr.CrystallographicState((fcc[i], fcc[j]), (g1, g2)))
        worst = max(worst, r2["double_slip_mismatch"])
    add("double_slip_det_random", worst, 1e-12)
    # additivity residual vanishes iff M^T m^a = 0
    misclassified, worst_route = 0, 0.0
    for t in range(generated):
        a = fcc[rng.integers(len(fcc))]
        mu = int(rng.integers(1, 6)) * a.p
        if t % 2 == 0:
            b = fcc[rng.integers(len(fcc))]
            M = rng.uniform(-0.3, 0.3) * b.dyad
        else:
            # positive case: rows annihilate m^a
            s_perp = np.linalg.svd(a.m[None, :])[2][1:]
            M = np.einsum("ki,kj->ij", rng.standard_normal((2, 3)), s_perp) * 0.1
        compat = np.linalg.norm(M.T @ a.m) < 1e-12
        res = cr.additivity_residual(M, a, mu)
        composed = cr.composed_disarrangement(M, a, mu)
        worst_route = max(worst_route, float(np.max(np.abs((M + mu * a.dyad - composed) - res))))
        vanishes = np.linalg.norm(res) < 1e-15
        misclassified += int(vanishes != compat)
    add("additivity_iff_slip_condition", misclassified, 0)
    add("additivity_two_routes", worst_route, 1e-12)
    # composition through structured deformations (single slip keeps the ISD condition)
    from .geometry import Box
    big = Box(-np.ones(3), 2 * np.ones(3))
    host = cr.CrystallographicState((s2,), (gammas[1],)).to_deformation(big)
    mu = 2 * s1.p
    comp = cr.compose(host, cr.two_level_shear(s1, mu, 0.0, x0=np.full(3, 0.5)))
    x = np.array([[0.3, 0.4, 0.5]])
    M_comp = np.eye(3) - K_field(comp)(x)[0]
    M_host = np.eye(3) - K_field(host)(x)[0]
    add("composition_matches_formula", float(np.max(np.abs(M_comp - cr.composed_disarrangement(M_host, s1, mu)))),
        1e-12)
    add("factorization", cr.factorization_defect(comp), 1e-12)
    # lattice energy: frame indifference and periodicity
    subset = cr.preset(preset, p)
    psi = cr.lattice_energy(subset)
    sd = cr.two_level_shear(subset[0], 3.3 * p, 0.4 * p, x0=np.full(3, 0.5))
    Qs = cr.random_rotations(rotations, seed)
    deformations = [cr.two_level_shear(subset[i % len(subset)], float(mu_k) * p, float(g_k) * p, x0=np.full(3, 0.5))
                    for i, (mu_k, g_k) in enumerate(rng.uniform(-4, 4, (deformations_count, 2)))]
    fi = max(cr.frame_indifference_check(psi, d, Q, per_axis=2) for d in deformations for Q in Qs)
    add("frame_indifference", fi, 1e-12)
    neg = max(cr.frame_indifference_check(psi, sd, Q, per_axis=2, wrong=True) for Q in Qs[:10])
    add("frame_indifference_negative_control", -neg, -1e-9, neg > 1e-9)
    per = 0.0
    for a in (0, 2, 4):
        for b in (1, 3, 6):
            per = max(per, cr.periodicity_check(psi, subset[a], subset[b], samples=5))
    add("lattice_periodicity", per, 1e-12)
    naive = cr.naive_sine_density(subset)
    nper = cr.periodicity_check(naive, subset[0], subset[3], samples=5)
    add("naive_periodicity_negative_control", -nper, -1e-6, nper > 1e-6)
    return rows


def run_crystal(cfg: ExperimentConfig) -> Report:
    rep = Report("crystal", ["check", "value", "tol", "pass"])
    prm = cfg.params
    wanted = prm.get("checks")
    rows = crystal_battery(cfg.seed, prm.get("rotations", 100), prm.get("p", cr.DEFAULT_PERIOD),
                           tuple(prm.get("gammas", (0.1, 0.1))), prm.get("generated", 20),
                           prm.get("deformations", 10), prm.get("preset", "fcc_independent"))
    for name, value, tol, ok in rows:
        if wanted and name not in wanted:
            continue
        rep.add(check=name, value=value, tol=tol, **{"pass": int(ok)})
        rep.check(name, value, tol, ok)
    return rep


# ---------------------------------------------------------------- cell formula


def oneD_reduction(W=None, c: float = 1.0, psi=None) -> dict:
    """Term-by-term comparison of the 1D total energy with W(G) + c|g' - G| + c|[g]| + Psi(g' - G)."""
    from .kinematics import step_jump
    W = W or builtin("area_W")
    psi = psi or builtin("sin2_periodic", period=0.8)
    psi_s = builtin("c_abs_psi", c=c)
    F, G, jump = 1.0, 0.6, 0.5
    sd = step_jump([jump], 0.5, F=[[F]], G=[[G]])
    tot = total_energy(sd, W, psi_s, psi)
    expected = {"H_term": float(W(None, np.array([[G]]))[0]) + c * abs(F - G), "h_term": c * abs(jump),
                "Psi_bulk": float(psi(None, np.array([[F - G]]))[0]), "Psi_surface": 0.0}
    return {k: abs(tot[k] - v) for k, v in expected.items()}


def _single_cell(cfg: ExperimentConfig) -> Report:
    """One cell problem from params A, B, p: value, mode flag and competitor."""
    prm = cfg.params
    A = np.atleast_2d(np.asarray(prm["A"], dtype=float))
    B = np.atleast_2d(np.asarray(prm["B"], dtype=float))
    W = from_config(prm.get("W", "area_W"))
    psi_s = from_config(prm.get("psi", {"name": "c_abs_psi", "c": prm.get("c", 1.0)}))
    if prm.get("p", W.p) != W.p:
        raise ConfigError("p must match the growth exponent of W")
    prob = cellmod.CellProblem(np.zeros(A.shape[1]), A, B, W.p, W, psi_s)
    mode = prm.get("mode", "closed" if W.convex and W.p == 1 and psi_s.name == "c_abs_psi" else "upper")
    res = cellmod.cell_value(prob, mode, seed=cfg.seed)
    rep = Report("cell", ["value", "mode"])
    rep.add(value=res["value"], mode=res["mode"])
    rep.info.update(value=res["value"], mode=res["mode"], competitor=res.get("competitor"))
    return rep


def run_cell(cfg: ExperimentConfig) -> Report:
    if "A" in cfg.params:
        return _single_cell(cfg)
    rep = Report("cell", ["index", "N", "nuclear_norm", "oracle", "oracle_gap", "closed_form", "laminate",
                          "laminate_gap"])
    rng = np.random.default_rng(cfg.seed)
    W = from_config(cfg.params.get("W", "area_W"))
    c = cfg.params.get("c", 1.0)
    psi_s = builtin("c_abs_psi", c=c)
    count = cfg.params.get("pairs", 50)
    trials = cfg.params.get("oracle_trials", 10_000)
    worst_o = worst_l = 0.0
    below = 0
    for i in range(count):
        N = 2 if i % 2 == 0 else 3
        A, B = rng.standard_normal((N, N)), rng.standard_normal((N, N))
        nn = cellmod.nuclear_norm(A - B)
        orc = cellmod.dyadic_decomposition_oracle(A - B, trials=trials, seed=cfg.seed + i)
        closed = cellmod.H1_convex(np.zeros(N), A, B, W, c)
        lam = cellmod.laminate_upper_bound(cellmod.CellProblem(np.zeros(N), A, B, 1, W, psi_s), seed=cfg.seed + i,
                                           use_svd=False)
        below += int(min(lam["candidates"]) < closed - 1e-9)
        og, lg = _rel(orc, nn), _rel(lam["value"], closed)
        worst_o, worst_l = max(worst_o, og), max(worst_l, lg)
        rep.add(index=i, N=N, nuclear_norm=nn, oracle=orc, oracle_gap=og, closed_form=closed,
                laminate=lam["value"], laminate_gap=lg)
    rep.check("oracle_vs_nuclear", worst_o, cfg.checks.get("oracle_tol", 1e-2))
    rep.check("laminate_vs_closed", worst_l, cfg.checks.get("laminate_tol", 2e-2))
    rep.check("laminate_never_below_closed", below, 0)
    red = oneD_reduction(W, c=c)
    rep.check("oneD_reduction", max(red.values()), 1e-12, terms=red)
    return rep


# ---------------------------------------------------------------- density validation


def run_validate_density(cfg: ExperimentConfig) -> Report:
    rep = Report("validate-density", ["density", "declared", "L_hat", "L_pass", "tail_oscillation", "C_hat",
                                      "E_pass", "recession_at_unit"])
    for desc in cfg.densities:
        phi = from_config(desc)
        shape = tuple(cfg.params.get("shape", (3, 3) if phi.name == "lattice_crystal" else (1, 1)))
        samples = cfg.params.get("samples", 100 if phi.name == "lattice_crystal" else 2000)
        plan = SamplePlan(seed=cfg.seed, samples=samples, shape=shape,
                          lattice_step=cfg.params.get("lattice_step", 0.25 if shape == (1, 1) else 25.0))
        L = validate_class_L(phi, plan)
        E = validate_class_E(phi, plan)
        try:
            rec = float(phi.recession(None, np.ones((1,) + shape) / np.sqrt(np.prod(shape)))[0])
        except GrowthError:
            rec = float("inf")
        rep.add(density=phi.name, declared=phi.class_tag, L_hat=L["L_hat"], L_pass=int(L["pass"]),
                tail_oscillation=E["tail_oscillation"], C_hat=E["C_hat"], E_pass=int(E["pass"]),
                recession_at_unit=rec)
        for cls, res in (("L", L), ("E", E)):
            if cls in phi.classes:
                rep.check(f"{phi.name}:{cls}", float(not res["pass"]), 0.0, res["pass"])
    return rep


RUNNERS = {"upscale": run_upscale, "localize": run_localize, "iterate": run_iterate, "reversed": run_reversed,
           "crystal": run_crystal, "cell": run_cell, "validate-density": run_validate_density}


def run_experiment(cfg: ExperimentConfig) -> Report:
    if cfg.experiment not in RUNNERS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    t0 = time.perf_counter()
    rep = RUNNERS[cfg.experiment](cfg)
    rep.info["runtime_s"] = time.perf_counter() - t0
    return rep
