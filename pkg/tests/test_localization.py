import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsoblab import Gaussian, InputError, UniformCube, draw
from logsoblab.localization import (entropy_decomposition_check, lsi_from_strong_tilt_check, martingale_check,
                                    sigma_tilde_cap_check, simulate_ensemble, simulate_path,
                                    variance_decomposition_check)
from logsoblab.psi import default_dictionary, exp_linear, linear


@pytest.fixture(scope="module")
def gauss_ens():
    cloud = draw(Gaussian.standard(2), 4000, seed=21)
    X = cloud.points
    track = {"one": np.ones(cloud.N), "x1": X[:, 0], "r2": np.einsum("ij,ij->i", X, X)}
    return simulate_ensemble(cloud, T=0.5, dt=0.025, n_paths=200, seed=5, track=track)


def test_input_validation():
    cloud = draw(Gaussian.standard(2), 4000, seed=1)
    with pytest.raises(InputError):
        simulate_ensemble(cloud, T=1.0, dt=0.5, n_paths=4)
    with pytest.raises(InputError):
        simulate_ensemble(cloud, T=0.33, dt=0.02, n_paths=4)
    with pytest.raises(InputError):
        simulate_ensemble(draw(Gaussian.standard(2), 200, seed=1), T=0.1, dt=0.02, n_paths=4)


def test_deterministic_and_path_streams():
    cloud = draw(Gaussian.standard(2), 2000, seed=1)
    a = simulate_ensemble(cloud, 0.2, 0.02, n_paths=3, seed=9)
    b = simulate_ensemble(cloud, 0.2, 0.02, n_paths=3, seed=9)
    np.testing.assert_array_equal(a.h, b.h)
    # path p does not depend on how many paths run alongside it
    p = simulate_path(cloud, 0.2, 0.02, seed=9, index=1)
    np.testing.assert_array_equal(p.h, a.h[1])


def test_noise_substeps_share_brownian_path():
    cloud = draw(Gaussian.standard(2), 2000, seed=1)
    coarse = simulate_ensemble(cloud, 0.2, 0.02, n_paths=2, seed=3, noise_substeps=2)
    fine = simulate_ensemble(cloud, 0.2, 0.01, n_paths=2, seed=3)
    pair = (fine.noise[:, 0::2] + fine.noise[:, 1::2]) / math.sqrt(2.0)
    np.testing.assert_allclose(coarse.noise, pair, atol=1e-12)


def test_constant_function_is_exact(gauss_ens):
    np.testing.assert_allclose(gauss_ens.M["one"], 1.0, atol=1e-12)


def test_martingales_gaussian(gauss_ens):
    for name in ("x1", "r2"):
        assert martingale_check(gauss_ens, name).passed


def test_martingale_check_detects_drift(gauss_ens):
    M = gauss_ens.M["x1"]
    gauss_ens.M["drifting"] = M + 3.0 * gauss_ens.times[None, :]
    try:
        rep = martingale_check(gauss_ens, "drifting")
    finally:
        del gauss_ens.M["drifting"]
    assert not rep.passed and rep.max_abs_z > 10


def test_martingale_check_needs_paths():
    cloud = draw(Gaussian.standard(2), 2000, seed=1)
    ens = simulate_ensemble(cloud, 0.1, 0.02, n_paths=10, seed=1, track={"x": cloud.points[:, 0]})
    with pytest.raises(InputError):
        martingale_check(ens, "x")


def test_gaussian_h_law(gauss_ens):
    # for a standard Gaussian base h_t is centered with variance 4t^2 + 2t per coordinate
    T = gauss_ens.times[-1]
    v = gauss_ens.h[:, -1].var(axis=0, ddof=1)
    se = (4 * T * T + 2 * T) * math.sqrt(2.0 / (gauss_ens.n_paths - 1))
    assert np.all(np.abs(v - (4 * T * T + 2 * T)) <= 4 * se)


def test_gaussian_covariance_along_paths(gauss_ens):
    for k in (0, 10, 20):
        t = gauss_ens.times[k]
        A = gauss_ens.A[:, k].mean(axis=0)
        np.testing.assert_allclose(A, np.eye(2) / (1 + 2 * t), atol=0.06)


def test_entropy_decomposition(gauss_ens):
    r = entropy_decomposition_check(gauss_ens, exp_linear(np.array([1.0, 0.0]), 0.2))
    assert r.passed
    assert abs(r.residual) <= 4 * r.residual_se


def test_bakry_emery_cap(gauss_ens):
    rep = sigma_tilde_cap_check(gauss_ens, range(2), 0.1, 0.5)
    assert rep.passed and len(rep.rows) > 0


def test_variance_decomposition(gauss_ens):
    r = variance_decomposition_check(gauss_ens, linear(np.array([1.0, 0.0])))
    assert r.holds and r.rate_bound_ok


def test_lsi_from_tilt_cube_dictionary():
    cloud = draw(UniformCube(math.sqrt(3.0), 2), 20_000, seed=2)
    rep = lsi_from_strong_tilt_check(cloud, 1.0, default_dictionary(2, 1.0))
    assert rep.passed
    assert max(r["entropy"] / r["bound"] for r in rep.rows if r["bound"] > 0) < 1.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_weights_are_probability_vectors(seed):
    cloud = draw(Gaussian.standard(2), 1000, seed=seed)
    ens = simulate_ensemble(cloud, 0.1, 0.02, n_paths=3, seed=seed)
    W = ens.weights(ens.n_steps)
    assert np.all(W >= 0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0)
    assert np.all(ens.n_eff <= cloud.N + 1e-6)
