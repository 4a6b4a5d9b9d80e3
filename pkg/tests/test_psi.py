import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsoblab import Gaussian, InputError, UniformCube, draw, make_rng
from logsoblab.psi import (DirectionNet, check_gradients, concentration_function_lb, default_dictionary,
                           dirichlet_energy, engine_psi_norm, entropy_functional, exp_linear, linear,
                           lsi_ratio, norm_tail_bound_check, poincare_ratio, psi1_norm, psi2_norm, sigma_sg,
                           sigma_tilde)
from logsoblab.quadrature import density_engine
from logsoblab.sampling import WeightedCloud


def test_psi2_uniform_oracle():
    # [DERIVED] brentq on int_0^1 exp(x^2/K^2) dx = 2 with scipy.integrate.quad
    x = make_rng(0, 1).uniform(-1, 1, 200_000)
    e = psi2_norm(x)
    assert e.value == pytest.approx(0.7727077921631287, rel=0.01)
    eng = density_engine(lambda v: np.zeros_like(v), -1.0, 1.0)
    assert engine_psi_norm(eng, p=2.0) == pytest.approx(0.7727077921631287, rel=1e-5)


def test_psi1_uniform_oracle():
    # [DERIVED] brentq on int_0^1 exp(x/K) dx = 2
    eng = density_engine(lambda v: np.zeros_like(v), -1.0, 1.0)
    assert engine_psi_norm(eng, p=1.0) == pytest.approx(0.7959050946318329, rel=1e-5)


def test_psi1_laplace_closed_form():
    # E exp(|X|/K) = 1/(1 - 1/K) = 2 at K = 2
    eng = density_engine(lambda v: -np.abs(v))
    assert engine_psi_norm(eng, p=1.0) == pytest.approx(2.0, rel=1e-4)


def test_psi1_centered_exponential_oracle():
    # [DERIVED] brentq on int_0^inf exp(|x-1|/K - x) dx = 2
    eng = density_engine(lambda v: -v, 0.0, np.inf)
    assert engine_psi_norm(eng, lambda v: v - 1.0, p=1.0) == pytest.approx(1.531346837854354, rel=1e-5)


def test_psi_norm_empty_and_degenerate():
    with pytest.raises(InputError):
        psi2_norm(np.array([]))
    assert psi2_norm(np.zeros(2000)).value == 0.0
    with pytest.raises(InputError):
        psi2_norm(np.ones(500))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_psi_norm_homogeneous(c, seed):
    x = make_rng(seed, 2).standard_normal(2000)
    a = psi2_norm(x).value
    b = psi2_norm(c * x).value
    assert b == pytest.approx(c * a, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_psi1_le_psi2_times_const(seed):
    # exp(|x|/K) <= exp(1/4 + x^2/K^2) ... so psi1 <= psi2 up to the factor relating both (use log 2 bound)
    x = make_rng(seed, 3).standard_normal(3000)
    assert psi1_norm(x).value <= psi2_norm(x).value / math.sqrt(math.log(2.0)) + 1e-9


def test_direction_net_symmetric_and_resolution():
    net = DirectionNet.build(3, size=200, seed=1)
    v = net.vectors
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)
    assert np.allclose(v[: len(v) // 2], -v[len(v) // 2:])
    assert 0 < net.resolution < 0.6


def test_sigma_sg_gaussian():
    c = draw(Gaussian.standard(3), 40_000, seed=3)
    res = sigma_sg(c, DirectionNet.build(3, 256, seed=1))
    assert res.psi2.value == pytest.approx(math.sqrt(8.0 / 3.0), rel=0.05)
    # the MGF constant of a standard Gaussian marginal is 1
    assert res.sigma_tilde.value == pytest.approx(1.0, abs=0.05)


def test_sigma_tilde_scales_linearly():
    c = draw(UniformCube(1.0, 2), 20_000, seed=4)
    net = DirectionNet.build(2, 32)
    a = sigma_tilde(c, net).value
    b = sigma_tilde(c.scaled(3.0), net).value
    assert b == pytest.approx(3.0 * a, rel=1e-6)


def test_norm_tail_bound_gaussian():
    c = draw(Gaussian.standard(4), 20_000, seed=5)
    rep = norm_tail_bound_check(c, 1.0, c0=2.0)
    assert rep.holds
    assert 0 < rep.c0_needed <= 2.0
    assert not norm_tail_bound_check(c, 1.0, c0=0.5).holds


def test_concentration_function_halfspace_gaussian():
    # for half-spaces of a standard Gaussian alpha(r) >= 1 - Phi(r)
    c = draw(Gaussian.standard(2), 40_000, seed=6)
    cur = concentration_function_lb(c, np.array([0.0, 1.0, 2.0]), DirectionNet.build(2, 16))
    assert cur.value[0] == pytest.approx(0.5, abs=0.01)
    assert cur.value[1] == pytest.approx(0.1587, abs=0.02)


def test_gaussian_lsi_equality_for_exponentials():
    # Ent(g^2) = s^2/2 e^{s^2/2} and energy = s^2/4 e^{s^2/2} for g = exp(s x.theta / 2)
    c = draw(Gaussian.standard(2), 200_000, seed=7)
    s = 0.4
    g = exp_linear(np.array([1.0, 0.0]), s)
    ent = entropy_functional(c, g)
    en = dirichlet_energy(c, g)
    assert ent.value == pytest.approx(s * s / 2 * math.exp(s * s / 2), abs=4 * ent.stderr + 1e-3)
    assert en.value == pytest.approx(s * s / 4 * math.exp(s * s / 2), abs=4 * en.stderr + 1e-3)
    r = lsi_ratio(c, g)
    assert r.value == pytest.approx(1.0, abs=4 * r.stderr + 0.01)


def test_poincare_ratio_linear_gaussian():
    c = draw(Gaussian.standard(2), 50_000, seed=8)
    r = poincare_ratio(c, linear(np.array([0.0, 1.0])))
    assert r.value == pytest.approx(1.0, abs=0.03)


def test_dictionary_gradients_consistent():
    X = make_rng(1, 9).standard_normal((50, 3))
    errs = check_gradients(default_dictionary(3), X)
    assert max(errs.values()) < 1e-5


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(0, 100))
def test_lsi_ratio_scale_covariance(c, seed):
    # scaling the cloud by c and the dictionary scale by c scales the ratio by c^2
    cloud = WeightedCloud.uniform(make_rng(seed, 10).uniform(-1, 1, (500, 2)))
    g0 = default_dictionary(2, 1.0, n_random=0).functions
    g1 = default_dictionary(2, c, n_random=0).functions
    for a, b in list(zip(g0, g1))[:6]:
        r0 = lsi_ratio(cloud, a).value
        r1 = lsi_ratio(cloud.scaled(c), b).value
        assert r1 == pytest.approx(c * c * r0, rel=1e-6, abs=1e-12)
