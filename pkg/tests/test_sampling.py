import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsoblab import (DegeneracyError, Gaussian, InputError, SmoothPotential, StepSizeError, TiltParams,
                       UniformBall, WeightedCloud, draw, hit_and_run, make_rng, mala_sample,
                       sample_measure)
from logsoblab.measures import ball_body, cube_body, make_bizeul_body
from logsoblab.sampling import batch_means_stderr, rejection_sample_body, reweight_tilt
from logsoblab.stats import n_eff, normalize_log_weights


def test_make_rng_streams_independent_and_reproducible():
    a = make_rng(3, 1).standard_normal(5)
    b = make_rng(3, 1).standard_normal(5)
    c = make_rng(3, 2).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_cloud_validation():
    with pytest.raises(InputError):
        WeightedCloud(np.zeros((3, 2)), np.array([0.5, 0.5, -0.0001]))
    with pytest.raises(InputError):
        WeightedCloud(np.zeros((3, 2)), np.ones(2) / 2)


def test_cloud_save_load(tmp_path):
    c = draw(Gaussian.standard(2), 50, seed=1)
    c.save(tmp_path / "c.npz")
    c2 = WeightedCloud.load(tmp_path / "c.npz")
    np.testing.assert_array_equal(c.points, c2.points)
    np.testing.assert_array_equal(c.weights, c2.weights)


def test_draw_is_deterministic():
    a = draw(UniformBall(1.0, 3), 100, seed=4)
    b = draw(UniformBall(1.0, 3), 100, seed=4)
    np.testing.assert_array_equal(a.points, b.points)


def test_draw_ball_radius_law():
    # P(|X| <= r) = r^d on the unit ball
    c = draw(UniformBall(1.0, 3), 40_000, seed=2)
    r = np.linalg.norm(c.points, axis=1)
    assert np.mean(r <= 0.5) == pytest.approx(0.125, abs=0.006)


def test_gaussian_tilt_sampled_exactly():
    g = Gaussian.standard(3)
    c = sample_measure(g, 40_000, seed=3, tilt=TiltParams(0.5, np.array([1.0, 0.0, 0.0])))
    np.testing.assert_allclose(c.mean, [0.5, 0, 0], atol=0.02)
    np.testing.assert_allclose(c.cov, 0.5 * np.eye(3), atol=0.02)


def test_reweight_degeneracy_raises():
    c = draw(Gaussian.standard(2), 1000, seed=1)
    with pytest.raises(DegeneracyError):
        reweight_tilt(c, TiltParams(0.0, np.array([30.0, 0.0])))


def test_reweight_matches_exact_gaussian_tilt():
    c = draw(Gaussian.standard(2), 100_000, seed=5)
    r = reweight_tilt(c, TiltParams(0.0, np.array([0.5, 0.0])))
    assert r.mean[0] == pytest.approx(0.5, abs=0.02)


def test_hit_and_run_cube_moments():
    body = cube_body(1.0, 4)
    c = hit_and_run(body, 8000, seed=2)
    assert np.all(body.contains(c.points))
    np.testing.assert_allclose(c.mean, 0.0, atol=0.05)
    np.testing.assert_allclose(np.diag(c.cov), 1.0 / 3.0, atol=0.03)


def test_hit_and_run_ball_with_gaussian_factor():
    # on a big ball the restricted Gaussian is nearly N(0, I/(2t))
    body = ball_body(10.0, 3)
    c = hit_and_run(body, 16_000, seed=3, t=1.0)
    np.testing.assert_allclose(np.diag(c.cov), 0.5, atol=0.04)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_hit_and_run_backends_agree_with_rejection(backend):
    body = make_bizeul_body(4, 8.0)
    har = hit_and_run(body, 8000, seed=7, t=0.5, backend=backend)
    rej = rejection_sample_body(body, 8000, seed=7, t=0.5)
    v_h = np.var(har.points[:, -1])
    v_r = np.var(rej.points[:, -1])
    se = math.hypot(batch_means_stderr((har.points[:, -1] - har.points[:, -1].mean()) ** 2, 8),
                    np.std(rej.points[:, -1] ** 2) / math.sqrt(8000))
    assert abs(v_h - v_r) <= 4 * se


@pytest.mark.parametrize("body,t", [(cube_body(1.0, 4), 0.0), (ball_body(2.0, 3), 0.7),
                                    (make_bizeul_body(16, 8.0), 0.0), (make_bizeul_body(16, 8.0), 0.5)])
def test_backends_identical_randomness_short_chains(body, t):
    kw = dict(seed=3, t=t, n_chains=2, burn_in=0, thinning=1)
    a = hit_and_run(body, 60, backend="numba", **kw)
    b = hit_and_run(body, 60, backend="numpy", **kw)
    np.testing.assert_allclose(a.points, b.points, atol=1e-9)


def test_hit_and_run_deterministic_per_backend():
    body = cube_body(1.0, 3)
    for be in ("numpy", "numba"):
        a = hit_and_run(body, 400, seed=9, backend=be)
        b = hit_and_run(body, 400, seed=9, backend=be)
        np.testing.assert_array_equal(a.points, b.points)


def test_mala_quartic_symmetric():
    sp = SmoothPotential.named("quartic", 2)
    c = mala_sample(sp, N=8000, seed=1)
    np.testing.assert_allclose(c.mean, 0.0, atol=0.06)
    assert c.provenance["acceptance"] > 0.3


def test_mala_step_size_error():
    sp = SmoothPotential.named("quartic", 2)
    with pytest.raises(StepSizeError):
        mala_sample(sp, N=200, seed=1, step=50.0, burn_in=0, tune=False)


def test_batch_means_needs_two_chains():
    with pytest.raises(InputError):
        batch_means_stderr(np.ones(10), 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60))
def test_normalized_weights_sum_to_one_and_neff_bounds(logw):
    w = normalize_log_weights(np.array(logw))
    assert w.sum() == pytest.approx(1.0)
    assert 1.0 - 1e-9 <= n_eff(w) <= len(logw) + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_hit_and_run_stays_in_body(seed, d):
    body = cube_body(1.0, d)
    c = hit_and_run(body, 64, burn_in=5, thinning=1, seed=seed, n_chains=2, backend="numpy")
    assert np.all(body.contains(c.points))
