import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdlab.errors import ISDViolation, UnsupportedDeformation
from sdlab.geometry import Box
from sdlab.kinematics import (K_field, affine, check_isd, deck_of_cards, extend, limit_measure, sd_norm,
                              singular_part, staircase_approximation, step_jump, total_variation_sbv,
                              tv_constant, two_level_shear, two_level_shear_1d)
from sdlab.measure import pair
from sdlab.quadrature import doubling_quadrature


class _Sys:
    def __init__(self, s, m):
        self.s, self.m = np.asarray(s, float), np.asarray(m, float)


def _bump_test_function(dim):
    def phi(x):
        return np.prod(np.sin(np.pi * x) ** 2, axis=1)

    def dphi(x, j):
        out = np.prod(np.sin(np.pi * x) ** 2, axis=1)
        s = np.sin(np.pi * x[:, j])
        safe = np.where(np.abs(s) > 1e-300, s, 1.0)
        return out / safe ** 2 * 2 * np.pi * s * np.cos(np.pi * x[:, j])

    return phi, dphi


def _ibp_residual(u, n, dim):
    """max over (i, j) of |int u_i d_j phi + <Du_ij, phi>| with the left side by quadrature."""
    phi, dphi = _bump_test_function(dim)
    brk = [np.arange(1, n) / n for _ in range(dim)]
    du = pair(u.derivative_measure(max(n, 16)), phi, order=6)
    worst = 0.0
    for j in range(dim):
        lhs, _ = doubling_quadrature(lambda x: u.value(x) * dphi(x, j)[:, None], [0.0] * dim, [1.0] * dim,
                                     breakpoints=brk, order=8, tol=1e-11)
        worst = max(worst, float(np.max(np.abs(lhs + du[:, j]))))
    return worst


@pytest.mark.parametrize("n", [1, 3, 8])
def test_staircase_derivative_passes_integration_by_parts_1d(n):
    u = staircase_approximation(two_level_shear_1d(0.7, 0.3), n)
    assert _ibp_residual(u, n, 1) < 1e-9


def test_staircase_derivative_passes_integration_by_parts_2d():
    sd = two_level_shear([1.0, 0.0], [0.0, 1.0], 0.6, 0.2)
    u = staircase_approximation(sd, 4)
    assert _ibp_residual(u, 4, 2) < 1e-8


def test_one_dimensional_staircase_jumps():
    n = 5
    u = staircase_approximation(two_level_shear_1d(0.7, 0.3), n)
    assert len(u.facets) == n - 1
    for f in u.facets:
        assert f.amplitude[0, 0] == pytest.approx((0.7 - 0.3) / n, rel=1e-14)
    x = np.linspace(0.01, 0.99, 11)[:, None]
    assert np.all(u.gradient(x) == 0.3)


def test_two_dimensional_staircase_places_jumps_on_horizontal_lines():
    n = 6
    e1, e2 = np.eye(2)
    sd = affine(np.eye(2), G=np.eye(2) - np.outer(e1, e2))
    u = staircase_approximation(sd, n)
    ys = sorted(float(f.center[1]) for f in u.facets)
    assert np.allclose(ys, np.arange(1, n) / n, atol=1e-14)
    for f in u.facets:
        assert np.allclose(f.normal, e2)
        assert np.allclose(f.amplitude, np.outer(e1, e2) / n, atol=1e-15)


def test_staircase_gradient_is_G():
    G = np.array([[1.2, 0.3], [-0.1, 0.9]])
    sd = affine([[1.0, 0.5], [0.2, 1.1]], G=G)
    u = staircase_approximation(sd, 7)
    x = np.random.default_rng(0).uniform(0, 1, (50, 2))
    assert np.allclose(u.gradient(x), G)


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(1, 40))
@settings(max_examples=30, deadline=None)
def test_total_variation_bound_on_staircase(mu, gamma, n):
    sd = two_level_shear([0.6, 0.8], [-0.8, 0.6], mu, gamma, x0=[0.5, 0.5])
    u = staircase_approximation(sd, n)
    assert total_variation_sbv(u, 16) <= tv_constant(2) * sd_norm(sd, 16)


def test_tv_constant_value():
    assert tv_constant(1) == 6.0
    assert tv_constant(4) == 9.0


def test_deck_of_cards_jump_sum():
    mu, gamma, n = 0.8, 0.1, 10
    u = deck_of_cards(None, mu, gamma, 0.0, n, Box([0.0], [1.0]))
    assert sum(f.amplitude[0, 0] for f in u.facets) == pytest.approx((mu - gamma) * (n - 1) / n, rel=1e-13)


def test_deck_with_four_cards_has_three_facets():
    u = deck_of_cards(_Sys([1, 0], [0, 1]), 0.5, 0.0, [0, 0], 4, Box([0, 0], [1, 1]))
    assert len(u.facets) == 3


def test_deck_identifies_disarrangement():
    s, m = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    mu, gamma = 0.9, 0.2
    u = deck_of_cards(_Sys(s, m), mu, gamma, [0, 0], 1000, Box([0, 0], [1, 1]))
    phi, _ = _bump_test_function(2)
    got = pair(singular_part(u), phi)
    # int sin^2(pi x) sin^2(pi y) = 1/4
    want = (mu - gamma) * np.outer(s, m) * 0.25
    assert np.max(np.abs(got - want)) <= 0.02 * np.max(np.abs(want))


@pytest.mark.parametrize("n", [64, 128])
def test_deck_weak_star_close_to_limit(n):
    mu, gamma = 0.6, -0.2
    u = deck_of_cards(None, mu, gamma, 0.0, n, Box([0.0], [1.0]))
    phi = lambda x: np.exp(x[:, 0]) * np.sin(3 * x[:, 0])
    want = (mu - gamma) * doubling_quadrature(phi, [0.0], [1.0], tol=1e-13)[0]
    got = pair(singular_part(u), phi)[0, 0]
    assert abs(got - want) < 0.01 * abs(want)


def test_K_and_M_identity():
    sd = two_level_shear([0.6, 0.8], [-0.8, 0.6], 0.4, 0.1)
    x = np.random.default_rng(1).uniform(0, 1, (10, 2))
    lhs = np.linalg.solve(sd.grad_g(x), sd.M(x))
    assert np.allclose(lhs, np.eye(2) - K_field(sd)(x), atol=1e-14)


def test_isd_check():
    assert check_isd(two_level_shear([1.0, 0.0], [0.0, 1.0], 0.5, 0.2)) <= 1e-12
    with pytest.raises(ISDViolation):
        check_isd(affine(np.eye(2), G=2 * np.eye(2)))


def test_limit_measure_of_affine_pair():
    F = np.array([[1.0, 0.4], [0.0, 1.0]])
    G = np.eye(2)
    mu = limit_measure(affine(F, G=G), 8)
    assert np.allclose(mu.ac_values(), F - G)


def test_extend_nearest_keeps_constant_field_and_prolongs_jumps():
    sd = step_jump([0.5, 0.0], 0.4, axis=0, domain=Box([0, 0], [1, 1]))
    ext = extend(sd, 0.2)
    assert ext.domain.lower == pytest.approx([-0.2, -0.2])
    f = ext.jumps[0]
    assert f.extent[0] == pytest.approx(1.4)
    assert np.allclose(ext.G([[-0.1, 1.1]]), sd.G([[0.5, 0.5]]))


def test_extend_gradient_mode_has_no_disarrangement_outside():
    sd = two_level_shear([1.0, 0.0], [0.0, 1.0], 0.5, 0.1)
    ext = extend(sd, 0.1, mode="gradient")
    out = np.array([[-0.05, 0.5], [0.5, 1.05], [1.05, 1.05]])
    assert np.allclose(ext.M(out), 0.0)
    assert np.allclose(ext.M([[0.5, 0.5]]), sd.M([[0.5, 0.5]]))


def test_extend_rejects_jump_on_boundary():
    sd = step_jump([1.0], 1.0, domain=Box([0.0], [1.0]))
    with pytest.raises(UnsupportedDeformation):
        extend(sd, 0.1)
    with pytest.raises(ValueError):
        extend(step_jump([1.0], 0.5), 0.0)
