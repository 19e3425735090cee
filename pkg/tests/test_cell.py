import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdlab.cell import (CellProblem, H1_convex, cell_value, dyadic_decomposition_oracle, laminate_upper_bound,
                        nuclear_norm, surface_density_hp)
from sdlab.densities import SurfaceDensity, area_W, c_abs_psi, double_well_W, quadratic_W
from sdlab.errors import ConfigError, ConvexityError

W = area_W()
PSI = c_abs_psi(1.0)


def test_nuclear_norm_examples():
    assert nuclear_norm(np.diag([3.0, -4.0])) == pytest.approx(7.0)
    assert nuclear_norm(np.eye(2)) == pytest.approx(2.0)
    a, b = np.array([1.0, 2.0, 2.0]), np.array([0.0, 3.0, 4.0])
    assert nuclear_norm(np.outer(a, b)) == pytest.approx(15.0)


@pytest.mark.parametrize("M", [np.diag([3.0, 4.0]), np.eye(2), np.outer([1.0, 2.0], [-1.0, 0.5])])
def test_frame_oracle_reproduces_examples(M):
    assert dyadic_decomposition_oracle(M, trials=4000) == pytest.approx(nuclear_norm(M), rel=1e-3)


def test_frame_oracle_never_below_nuclear_norm():
    rng = np.random.default_rng(4)
    for _ in range(5):
        M = rng.standard_normal((3, 3))
        assert dyadic_decomposition_oracle(M, trials=2000) >= nuclear_norm(M) - 1e-12


def test_closed_form_examples():
    B = np.array([[0.5, 0.0], [0.0, 0.0]])
    assert H1_convex(np.zeros(2), B, B, W, 1.0) == pytest.approx(float(W(None, B)[0]))
    A = B + np.diag([3.0, 4.0])
    assert H1_convex(np.zeros(2), A, B, W, 2.0) == pytest.approx(float(W(None, B)[0]) + 14.0)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_closed_form_above_jensen_bound(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((2, 3, 3))
    val = H1_convex(np.zeros(3), A, B, W, 1.5)
    # Jensen on the bulk part and |sum of jumps| on the singular part
    assert val >= float(W(None, B)[0]) + 1.5 * np.linalg.norm(A - B) - 1e-12
    assert val >= float(W(None, B)[0])


def test_convexity_is_enforced():
    with pytest.raises(ConvexityError):
        H1_convex(np.zeros(1), [[1.0]], [[0.0]], double_well_W(), 1.0)


def test_cell_value_modes():
    prob = CellProblem(np.zeros(2), np.eye(2), np.zeros((2, 2)), 1, W, PSI)
    exact = cell_value(prob)
    assert exact["mode"] == "exact" and exact["value"] == pytest.approx(1.0 + 2.0)
    up = cell_value(prob, "upper")
    assert up["mode"] == "upper" and up["value"] >= exact["value"] - 1e-9
    with pytest.raises(ConfigError):
        cell_value(CellProblem(np.zeros(2), np.eye(2), np.zeros((2, 2)), 2, quadratic_W(), PSI))
    with pytest.raises(ConfigError):
        cell_value(prob, "nope")


def test_cell_problem_validation():
    with pytest.raises(ConfigError):
        CellProblem(np.zeros(2), np.eye(2), np.eye(3), 1, W, PSI)
    with pytest.raises(ConfigError):
        CellProblem(np.zeros(2), np.eye(2), np.eye(2), 0.5, W, PSI)


def test_laminate_without_svd_approaches_closed_form():
    rng = np.random.default_rng(9)
    for N in (2, 3):
        A, B = rng.standard_normal((2, N, N))
        prob = CellProblem(np.zeros(N), A, B, 1, W, PSI)
        lam = laminate_upper_bound(prob, use_svd=False)
        closed = H1_convex(np.zeros(N), A, B, W, 1.0)
        assert closed - 1e-9 <= lam["value"] <= closed * 1.02


def test_laminate_competitor_reassembles_the_jump():
    A, B = np.array([[1.0, 2.0], [0.0, -1.0]]), np.zeros((2, 2))
    lam = laminate_upper_bound(CellProblem(np.zeros(2), A, B, 1, W, PSI))
    fam = lam["competitor"]["families"]
    total = sum(np.outer(f["jump"], f["normal"]) for f in fam)
    assert np.allclose(total, A - B, atol=1e-12)


def _anisotropic():
    return SurfaceDensity("aniso", lambda x, lam, nu: np.linalg.norm(lam, axis=-1) * (1 + 0.5 * nu[:, 0] ** 2),
                          1.0, 1.5)


def test_surface_density_examples():
    assert surface_density_hp(np.zeros(2), [3.0, 4.0], [1.0, 0.0], 1, W, c_abs_psi(2.0)) == (10.0, "exact")
    assert surface_density_hp(np.zeros(2), [0.0, 0.0], [1.0, 0.0], 1, W, _anisotropic()) == (0.0, "exact")
    val, flag = surface_density_hp(np.zeros(2), [1.0, 0.0], [1.0, 0.0], 1, W, _anisotropic())
    assert flag == "upper" and val <= 1.5 + 1e-12


@pytest.mark.parametrize("t", [0.5, 2.0, 7.0])
def test_surface_density_is_homogeneous_in_the_jump(t):
    lam, nu = np.array([0.3, -0.8]), np.array([0.6, 0.8])
    base, _ = surface_density_hp(np.zeros(2), lam, nu, 1, W, _anisotropic())
    scaled, _ = surface_density_hp(np.zeros(2), t * lam, nu, 1, W, _anisotropic())
    assert scaled == pytest.approx(t * base, rel=1e-8)
