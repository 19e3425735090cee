import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdlab.errors import QuadratureError
from sdlab.geometry import Band, Box, Domain
from sdlab.quadrature import doubling_quadrature, gauss_legendre, tensor_rule


def test_box_rejects_inverted_corners():
    with pytest.raises(ValueError):
        Box([0.0, 1.0], [1.0, 0.5])


def test_shrink_grow_volumes():
    b = Box([0, 0], [1, 2])
    assert b.volume == pytest.approx(2.0)
    assert b.shrink(0.25).volume == pytest.approx(0.5 * 1.5)
    assert b.grow(0.5).volume == pytest.approx(2 * 3)


def test_domain_centers_and_spacing():
    d = Domain(Box([0, 0], [1, 2]), (4, 8))
    assert np.allclose(d.spacing, [0.25, 0.25])
    assert d.n_cells == 32
    assert np.allclose(d.centers.mean(axis=0), [0.5, 1.0])


def test_band_volume_matches_outer_minus_inner():
    b = Box([0, 0], [1, 1])
    band = Band(b, -0.1, 0.0)
    assert band.volume == pytest.approx(1.0 - 0.8 ** 2, rel=1e-12)


@given(st.floats(0.01, 0.3), st.floats(0.0, 0.2))
@settings(max_examples=25, deadline=None)
def test_band_overlap_sums_to_volume(low, high):
    b = Box([0, 0], [1, 1])
    band = Band(b, -low, high)
    d = Domain(b.grow(0.5), 40)
    lo, hi = d.cell_bounds()
    got = band.overlap_volume(lo, hi)
    # cells wholly inside or outside are exact; straddling cells bound the error
    corners = np.stack(np.meshgrid(*[[0, 1]] * 2, indexing="ij"), -1).reshape(-1, 2)
    pts = lo[:, None, :] + corners[None] * (hi - lo)[:, None, :]
    dense = lo[:, None, :] + np.linspace(0, 1, 9)[None, :, None] * (hi - lo)[:, None, :]
    flags = np.concatenate([band.contains(pts.reshape(-1, 2)).reshape(len(lo), -1),
                            band.contains(dense.reshape(-1, 2)).reshape(len(lo), -1)], axis=1)
    mixed = flags.any(axis=1) & ~flags.all(axis=1)
    straddle = np.prod(hi - lo, axis=1)[mixed].sum()
    assert abs(got.sum() - band.volume) <= straddle
    assert np.all(got[~mixed & flags.all(axis=1)] == pytest.approx(np.prod(hi - lo, axis=1)[0]))


def test_band_overlap_is_exact_in_one_dimension():
    band = Band(Box([0.0], [1.0]), -0.13, 0.07)
    d = Domain(Box([-0.5], [1.5]), 37)
    lo, hi = d.cell_bounds()
    assert band.overlap_volume(lo, hi).sum() == pytest.approx(band.volume, rel=1e-12)


def test_gauss_legendre_is_exact_for_polynomials():
    x, w = gauss_legendre(4)
    # order 4 integrates degree 7 exactly on [-1, 1]
    assert np.dot(w, x ** 6) == pytest.approx(2 / 7, rel=1e-14)


def test_tensor_rule_integrates_product():
    pts, w = tensor_rule([np.linspace(0, 1, 3), np.linspace(0, 2, 2)], 3)
    assert np.dot(w, pts[:, 0] ** 2 * pts[:, 1]) == pytest.approx((1 / 3) * 2, rel=1e-13)


def test_doubling_quadrature_with_breakpoints():
    val, _ = doubling_quadrature(lambda x: np.abs(x[:, 0] - 0.3), [0.0], [1.0], breakpoints=[[0.3]], tol=1e-13)
    assert val == pytest.approx(0.5 * 0.09 + 0.5 * 0.49, abs=1e-13)


def test_doubling_quadrature_reports_failure():
    with pytest.raises(QuadratureError):
        doubling_quadrature(lambda x: np.sin(1 / np.maximum(x[:, 0], 1e-9)), [0.0], [1.0], tol=1e-14, max_level=3)
