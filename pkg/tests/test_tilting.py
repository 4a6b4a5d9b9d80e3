import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsoblab import ConvergenceError, DegeneracyError, Gaussian, InputError, TiltParams, UniformCube, draw
from logsoblab.quadrature import ProductQuadrature, density_engine
from logsoblab.tilting import (K_of_t, h_grid, invert_tilt_map, log_laplace, strong_tilt_scan, tilt_map,
                               tilt_moments, tilt_stability_scan, trace_decrease_check)


def test_log_laplace_gaussian():
    c = draw(Gaussian.standard(2), 100_000, seed=1)
    e = log_laplace(c, np.array([0.5, 0.0]))
    assert e.value == pytest.approx(0.125, abs=4 * e.stderr + 1e-3)
    assert log_laplace(c, np.zeros(2)).value == 0.0


def test_tilt_moments_product_quadrature_gaussian():
    pq = ProductQuadrature.from_spec(Gaussian.standard(3))
    tm = tilt_moments(pq, TiltParams(0.5, np.array([1.0, 2.0, 0.0])))
    np.testing.assert_allclose(tm.mean, [0.5, 1.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(tm.cov, 0.5 * np.eye(3), atol=1e-8)


def test_tilt_moments_stderr_calibrated():
    # the tilted mean of a cube cloud lands within 4 stderr of the exact product value
    cube = UniformCube(math.sqrt(3.0), 2)
    exact = tilt_moments(ProductQuadrature.from_spec(cube), TiltParams(0.5, np.array([1.0, 0.0])))
    c = draw(cube, 50_000, seed=3)
    tm = tilt_moments(c, TiltParams(0.5, np.array([1.0, 0.0])))
    assert np.all(np.abs(tm.mean - exact.mean) <= 4 * tm.mean_se)
    assert np.all(np.abs(tm.cov - exact.cov) <= 4 * tm.cov_se + 1e-12)


def test_tilt_moments_1d_engine():
    eng = density_engine(lambda x: -x * x / 2)
    tm = tilt_moments(eng, TiltParams(0.5, np.array([1.0])))
    assert tm.mean[0] == pytest.approx(0.5, abs=1e-6)
    assert tm.cov[0, 0] == pytest.approx(0.5, abs=1e-6)


def test_tilt_moments_rejects_unknown_source():
    with pytest.raises(InputError):
        tilt_moments("nope")


def test_invert_tilt_map_gaussian_quadrature():
    pq = ProductQuadrature.from_spec(Gaussian.standard(4))
    h = np.array([1.0, -0.5, 0.0, 2.0])
    res = invert_tilt_map(pq, 0.5, h)
    np.testing.assert_allclose(res.h0, h / 2.0, atol=1e-8)
    assert all(b <= a for a, b in zip(res.residuals, res.residuals[1:]))


def test_invert_tilt_map_needs_positive_t():
    with pytest.raises(InputError):
        invert_tilt_map(ProductQuadrature.from_spec(Gaussian.standard(2)), 0.0, np.ones(2))


def test_invert_tilt_map_budget():
    pq = ProductQuadrature.from_spec(UniformCube(math.sqrt(3.0), 2))
    with pytest.raises(ConvergenceError):
        invert_tilt_map(pq, 1.0, np.array([3.0, 1.0]), tol=1e-14, max_iter=1)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-3, 3), st.floats(-3, 3))
def test_tilt_map_inverse_roundtrip_cube(t, a, b):
    pq = ProductQuadrature.from_spec(UniformCube(math.sqrt(3.0), 2))
    h0 = np.array([a, b])
    h = tilt_map(pq, t, h0)
    res = invert_tilt_map(pq, t, h, tol=1e-10)
    np.testing.assert_allclose(res.h0, h0, atol=1e-7)


def test_K_of_t_gaussian_product_and_cloud():
    for n, t in ((4, 0.5), (3, 1.0)):
        ref = (1 + 2 * t) ** n / (1 + 4 * t) ** (n / 2)
        assert K_of_t(ProductQuadrature.from_spec(Gaussian.standard(n)), t).value == pytest.approx(ref, rel=1e-8)
    c = draw(Gaussian.standard(2), 100_000, seed=4)
    e = K_of_t(c, 0.5)
    ref = 2.0 ** 2 / 3.0
    assert abs(e.value - ref) <= 4 * e.stderr


def test_K_of_t_zero_and_degenerate():
    c = draw(Gaussian.standard(40), 500, seed=1)
    assert K_of_t(c, 0.0).value == 1.0
    with pytest.raises(DegeneracyError):
        K_of_t(c, 5.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 3.0), st.integers(1, 6))
def test_K_of_t_at_least_one(t, n):
    # Jensen
    assert K_of_t(ProductQuadrature.from_spec(UniformCube(1.0, n)), t).value >= 1.0 - 1e-12


def test_strong_tilt_scan_cube_bounds():
    pq = ProductQuadrature.from_spec(UniformCube(math.sqrt(3.0), 3))
    hs = h_grid(3, [0.5, 2.0], n_random=2, seed=1)
    rep = strong_tilt_scan(pq, [0.0, 0.5, 1.0], hs)
    for t, op in rep.opnorm_sup_by_t().items():
        if t > 0:
            assert op <= 1 / (2 * t) + 1e-9
    assert rep.M_hat == pytest.approx(1.0, abs=1e-6)
    st0 = tilt_stability_scan(pq, hs)
    assert st0.beta_hat == pytest.approx(1.0, abs=1e-6)


def test_trace_decrease_gaussian():
    a = draw(Gaussian.standard(4), 20_000, seed=5)
    b = draw(Gaussian.standard(4), 20_000, seed=6)
    rep = trace_decrease_check(a, [0.0, 0.5, 1.0], [0.5], b)
    # E_t |x|^2 = n / (1 + 2t)
    np.testing.assert_allclose(rep.m2, 4 / (1 + 2 * np.array([0.0, 0.5, 1.0])), atol=4 * rep.m2_se.max() + 1e-3)
    assert rep.monotone and rep.op_ok and rep.deriv_ok
    # d/dt = -Var = -2n / (1+2t)^2
    assert rep.deriv[0] == pytest.approx(-2.0, abs=0.15)
