import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsoblab import (BizeulBody, Gaussian, InputError, OneDimGrid, Product, RadialProfile, SmoothPotential,
                       TiltParams, UniformBall, UniformCube)
from logsoblab.measures import (load_spec, log_density_unnormalized, make_bizeul_body, save_spec,
                                slice_volume_ratio, spec_from_dict)
from logsoblab.quadrature import (ProductQuadrature, Quadrature1D, density_engine, normalize_second_moment,
                                  radial_engine)


def test_gaussian_log_density_matches_closed_form():
    # log densities are unnormalized: compare differences
    g = Gaussian(np.array([1.0, -1.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    x = np.array([0.3, 0.2])
    d = x - g.mean
    ref = -0.5 * d @ np.linalg.solve(g.cov, d)
    assert g.log_density(x) - g.log_density(g.mean) == pytest.approx(ref, abs=1e-12)


def test_gaussian_rejects_nonpsd():
    with pytest.raises(InputError):
        Gaussian(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_uniform_support_is_minus_inf_outside():
    c = UniformCube(1.0, 3)
    assert np.isfinite(c.log_density(np.zeros(3)))
    assert c.log_density(np.array([1.5, 0, 0])) == -np.inf
    b = UniformBall(2.0, 3)
    assert b.log_density(np.array([0.0, 0.0, 2.1])) == -np.inf


def test_tilt_factor_added_on_support_only():
    c = UniformCube(1.0, 2)
    tilt = TiltParams(0.5, np.array([1.0, 0.0]))
    x = np.array([[0.5, 0.5], [2.0, 0.0]])
    v = log_density_unnormalized(c, tilt, x)
    assert v[0] == pytest.approx(c.log_density(x[0]) - 0.5 * 0.5 + 0.5)
    assert v[1] == -np.inf


def test_tilt_params_validation():
    with pytest.raises(InputError):
        TiltParams(-1.0)
    with pytest.raises(InputError):
        TiltParams(0.0, np.array([np.nan]))
    with pytest.raises(InputError):
        TiltParams(0.0, np.ones(2)).h_vec(3)


def test_smooth_potential_gradient_matches_finite_difference():
    sp = SmoothPotential.named("quartic", 3)
    x = np.array([0.3, -0.7, 1.1])
    g = sp.grad_log_density(x)
    eps = 1e-6
    fd = [(sp.log_density(x + eps * e) - sp.log_density(x - eps * e)) / (2 * eps) for e in np.eye(3)]
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_spec_roundtrip(tmp_path):
    specs = [Gaussian.standard(3), UniformCube(1.5, 2), UniformBall(2.0, 4), BizeulBody(8, 8.0),
             Product((UniformCube(1.0, 1), Gaussian.standard(1)))]
    for s in specs:
        p = tmp_path / f"{s.family}.json"
        save_spec(s, p)
        s2 = load_spec(p)
        x = s.center() + 0.1
        assert s2.log_density(x) == pytest.approx(s.log_density(x))


def test_spec_from_dict_unknown_family():
    with pytest.raises(InputError):
        spec_from_dict({"family": "nope"})


def test_one_dim_grid_normalized():
    x = np.linspace(-5, 5, 2001)
    m = OneDimGrid(x, np.exp(-x * x / 2) / math.sqrt(2 * math.pi))
    eng = Quadrature1D.from_spec(m)
    assert eng.mean == pytest.approx(0.0, abs=1e-8)
    assert eng.var == pytest.approx(1.0, rel=1e-4)


def test_quadrature_standardized_moments():
    # standardized exponential: third central moment 2, fourth 9
    eng = density_engine(lambda x: -x, 0.0, np.inf).standardized()
    assert eng.var == pytest.approx(1.0, rel=1e-8)
    assert eng.moment(3, central=True) == pytest.approx(2.0, rel=1e-5)
    assert eng.moment(4, central=True) == pytest.approx(9.0, rel=1e-5)


def test_quartic_fourth_moment_oracle():
    # [DERIVED] scipy.integrate.quad of x^4 e^{-x^4} / (x^2 e^{-x^4})^2 moments
    eng = density_engine(lambda x: -x**4).standardized()
    assert eng.moment(4, central=True) == pytest.approx(2.188439615226477, rel=1e-6)


def test_product_quadrature_tilted_cube():
    # [DERIVED] 1D moments of exp(-x^2/2 + x) on [-sqrt3, sqrt3] by scipy.integrate.quad
    pq = ProductQuadrature.from_spec(UniformCube(math.sqrt(3.0), 3))
    m, C = pq.tilt_moments(0.5, np.array([1.0, 0.0, 0.0]))
    assert m[0] == pytest.approx(0.6134629460661111, rel=1e-6)
    assert C[0, 0] == pytest.approx(0.5243577464491164, rel=1e-6)
    assert m[1] == pytest.approx(0.0, abs=1e-12)


def test_product_quadrature_cube_K():
    # [DERIVED] product of 1D quad ratios, dim 3, t = 0.5
    pq = ProductQuadrature.from_spec(UniformCube(math.sqrt(3.0), 3))
    assert pq.K_of_t(0.5) == pytest.approx(1.5056336877318495, rel=1e-6)


def test_radial_profile_second_moment_normalization():
    spec = RadialProfile.from_function(lambda r: -r, 60.0, 5)
    spec = normalize_second_moment(spec, 5.0)
    assert radial_engine(spec).moment(2) == pytest.approx(5.0, rel=1e-6)


def test_bizeul_body_membership():
    body = make_bizeul_body(4, 8.0)
    assert body.contains(np.zeros(5))
    lam_max = 1.0 + 2.0 / 8.0
    assert not body.contains(np.array([0, 0, 0, 0, lam_max + 1e-3]))
    # |x| = sqrt(n) + C0 (1 - |lam|) is the boundary
    x = np.array([1.7, 1.7, 1.7, 1.7, 0.0])
    assert np.linalg.norm(x[:4]) <= 2.0 + 8.0
    assert body.contains(x)


def test_slice_volume_ratio_flat_core():
    # slices with |lam| <= 1 - (sqrt(3n) - sqrt(n))/C0 contain the whole cube
    body = make_bizeul_body(4, 8.0)
    r, se = slice_volume_ratio(body, 0.3, 0.0, n_mc=20_000, seed=1)
    assert r == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(-0.8, 0.8))
def test_quadrature_log_partition_convex_in_h(t, h):
    # second derivative of log Z in h is a variance, hence >= 0 (finite for |h| < 1 at t = 0)
    eng = density_engine(lambda x: -np.abs(x))
    d = 0.05
    f = [eng.log_partition(t, h + k * d) for k in (-1, 0, 1)]
    assert f[0] - 2 * f[1] + f[2] > 0


def test_log_partition_laplace_mgf():
    # E exp(hX) = 1 / (1 - h^2) for the unit Laplace law
    eng = density_engine(lambda x: -np.abs(x))
    for h in (1e-3, 0.3, 0.7):
        assert eng.log_partition(0.0, h) == pytest.approx(-math.log1p(-h * h), abs=1e-4)
