"""Acceptance suite: the twelve primary criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python3 tests/test_acceptance.py``.
"""
import filecmp
import math
import os
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from logsoblab import (BizeulBody, Gaussian, Product, SmoothPotential, TiltParams, UniformCube, draw,
                       sample_measure)
from logsoblab.localization import (entropy_decomposition_check, lsi_from_strong_tilt_check, martingale_check,
                                    sigma_tilde_cap_check, simulate_ensemble)
from logsoblab.psi import default_dictionary, exp_linear, psi2_norm
from logsoblab.quadrature import ProductQuadrature
from logsoblab.registry import DEFAULT_PATH, Registry
from logsoblab.report import emit_tables
from logsoblab.sampling import make_rng
from logsoblab.scenarios import _iso_measure, family_engine, radial_measure, run_scenario
from logsoblab.tilting import K_of_t, h_grid, invert_tilt_map, strong_tilt_scan, tilt_moments, trace_decrease_check

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

RESULTS = {}
WORKERS = max(1, min(4, os.cpu_count() or 1))


def record(num: int, title: str, ok: bool, detail: str, runtime: float) -> None:
    RESULTS[num] = f"{'PASS' if ok else 'FAIL'} criterion {num:2d} {title}: {detail} ({runtime:.1f} s)"
    print(RESULTS[num])


@pytest.fixture(scope="module")
def gauss_T1():
    """200 paths x 1e4 particles on Gaussian(0, I_4), T = 1."""
    t0 = time.perf_counter()
    cloud = draw(Gaussian.standard(4), 10_000, seed=101)
    X = cloud.points
    track = {"one": np.ones(cloud.N), "x_theta": X[:, 0], "r2": np.einsum("ij,ij->i", X, X)}
    ens = simulate_ensemble(cloud, T=1.0, dt=0.02, n_paths=200, seed=102, track=track)
    return ens, time.perf_counter() - t0


def test_c01_gaussian_psi2():
    t0 = time.perf_counter()
    x = make_rng(1, 0).standard_normal(100_000)
    e = psi2_norm(x)
    ref = math.sqrt(8.0 / 3.0)
    rel = abs(e.value / ref - 1.0)
    rt = time.perf_counter() - t0
    ok = rel <= 0.02 and rt < 1.0
    record(1, "Gaussian psi2", ok, f"psi2={e.value:.5f} vs sqrt(8/3)={ref:.5f}, rel err {rel:.2e} <= 0.02", rt)
    assert ok


def test_c02_gaussian_tilt_calculus():
    t0 = time.perf_counter()
    d, t = 8, 0.5
    h = np.eye(d)[0]
    cloud = draw(Gaussian.standard(d), 200_000, seed=201)
    tm = tilt_moments(cloud, TiltParams(t, h))
    zm = np.abs(tm.mean - h / 2.0) / tm.mean_se
    zc = np.abs(tm.cov - np.eye(d) / 2.0) / tm.cov_se
    inv = invert_tilt_map(ProductQuadrature.from_spec(Gaussian.standard(d)), t, h, tol=1e-10)
    err = float(np.max(np.abs(inv.h0 - h / (1 + 2 * t))))
    rt = time.perf_counter() - t0
    ok = zm.max() <= 3 and zc.max() <= 3 and err <= 1e-3 and rt < 10
    record(2, "Gaussian tilt calculus", ok,
           f"max |z| mean {zm.max():.2f}, cov {zc.max():.2f} (<= 3); inversion err {err:.1e} (<= 1e-3)", rt)
    assert ok


def test_c03_K_of_t_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (4, 20):
        src = ProductQuadrature.from_spec(Gaussian.standard(n))
        for t in (0.1, 0.5, 1.0):
            ref = (1 + 2 * t) ** n / (1 + 4 * t) ** (n / 2)
            worst = max(worst, abs(K_of_t(src, t).value / ref - 1.0))
    ok = worst <= 0.05
    record(3, "K(t) Gaussian oracle", ok, f"max rel err {worst:.2e} <= 0.05", time.perf_counter() - t0)
    assert ok


def test_c04_moment_sweep_e1():
    t0 = time.perf_counter()
    rep = run_scenario({"scenario": "E1", "seed": 0}, Registry(DEFAULT_PATH), workers=WORKERS)
    rows = rep.tables["e1_family"].rows
    vx2 = []
    for r in rows:
        eng = family_engine(r["density"])
        vx2.append(math.sqrt(eng.moment(4) - eng.moment(2) ** 2))
    c1 = max(r["c1"] for r in rows)
    c2 = max(r["c2"] for r in rows)
    frozen_checks = [a for a in rep.assertions if a.invariant.startswith(("E1.square_psi1_centering[", "E1.square_psi1_vs_fluct["))]
    ok = (len(rows) >= 8 and min(vx2) >= 0.2 and c1 <= 4 and c2 <= 4 and all(a.passed for a in frozen_checks)
          and rep.passed)
    record(4, "1D moment sweep", ok,
           f"{len(rows)} densities; min Var(X^2)^1/2 {min(vx2):.3f} >= 0.2, max Var((X-EX)^2)^1/2 {c1:.3f} <= 4, "
           f"max psi1(X-EX) {c2:.3f} <= 4; {sum(a.passed for a in frozen_checks)}/{len(frozen_checks)} frozen-constant checks; "
           f"E1 {sum(a.passed for a in rep.assertions)}/{len(rep.assertions)}", time.perf_counter() - t0)
    assert ok


def test_c05_martingale(gauss_T1):
    ens, sim_time = gauss_T1
    t0 = time.perf_counter()
    zs = {nm: martingale_check(ens, nm).max_abs_z for nm in ("one", "x_theta", "r2")}
    rt = sim_time + time.perf_counter() - t0
    ok = max(zs.values()) <= 4 and rt < 120
    record(5, "martingale drift", ok, ", ".join(f"{k} max|z|={v:.2f}" for k, v in zs.items()) + " (<= 4)", rt)
    assert ok


def test_c06_entropy_decomposition():
    t0 = time.perf_counter()
    cloud = draw(Gaussian.standard(4), 10_000, seed=601)
    ens = simulate_ensemble(cloud, T=0.5, dt=0.02, n_paths=200, seed=602)
    r = entropy_decomposition_check(ens, exp_linear(np.eye(4)[0], 0.2))
    ok = abs(r.residual) <= 4 * r.residual_se
    record(6, "entropy decomposition", ok,
           f"residual {r.residual:.3e}, {abs(r.residual) / r.residual_se:.2f} combined se (<= 4)",
           time.perf_counter() - t0)
    assert ok


def test_c07_bakry_emery_cap(gauss_T1):
    t0 = time.perf_counter()
    ens, _ = gauss_T1
    g = sigma_tilde_cap_check(ens, range(3), 0.1, 1.0)
    cube = draw(UniformCube(math.sqrt(3.0), 4), 10_000, seed=701)
    cens = simulate_ensemble(cube, T=1.0, dt=0.02, n_paths=3, seed=702)
    c = sigma_tilde_cap_check(cens, range(3), 0.1, 1.0)
    ok = g.passed and c.passed
    record(7, "Bakry-Emery cap along paths", ok,
           f"gaussian {len(g.rows)} points max z {g.max_z:.2f}, cube {len(c.rows)} points max z {c.max_z:.2f} "
           "(<= 4)", time.perf_counter() - t0)
    assert ok


def test_c08_lsi_from_strong_tilt():
    t0 = time.perf_counter()
    g = draw(Gaussian.standard(4), 20_000, seed=801)
    rg = lsi_from_strong_tilt_check(g, 1.0, default_dictionary(4, 1.0))
    cube = UniformCube(math.sqrt(3.0), 8)
    scan = strong_tilt_scan(ProductQuadrature.from_spec(cube), [0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
                            h_grid(8, [0.5, 1.0, 2.0, 4.0], 4, 0))
    c = draw(cube, 20_000, seed=802)
    rc = lsi_from_strong_tilt_check(c, scan.M_hat, default_dictionary(8, 1.0))
    worst = max(r["entropy"] / r["bound"] for r in rg.rows + rc.rows if r["bound"] > 0)
    ok = rg.passed and rc.passed
    record(8, "LSI from strong tilt", ok,
           f"{len(rg.rows)} + {len(rc.rows)} dictionary functions, M_cube={scan.M_hat:.4f}, "
           f"max Ent/bound {worst:.3f}", time.perf_counter() - t0)
    assert ok


def _trace_families():
    return {
        "gaussian": _iso_measure("gaussian", 8),
        "cube": _iso_measure("cube", 8),
        "ball": _iso_measure("ball", 8),
        "radial_exp": radial_measure("exp", 8),
        "radial_quartic": radial_measure("quartic", 8),
        "smooth_quartic": SmoothPotential.named("quartic", 4),
        "product": Product((UniformCube(math.sqrt(3.0), 1), UniformCube(math.sqrt(3.0), 1), Gaussian.standard(1))),
        "tightness_body": BizeulBody(4, 8.0),
    }


def test_c09_trace_decrease():
    t0 = time.perf_counter()
    bad, worst = [], 0.0
    for i, (name, spec) in enumerate(_trace_families().items()):
        a = sample_measure(spec, 20_000, seed=900 + i)
        b = sample_measure(spec, 20_000, seed=950 + i)
        tr = trace_decrease_check(a, [0.0, 0.25, 0.5, 1.0, 2.0], [0.0, 0.5, 1.0], b)
        worst = max(worst, float(np.max(np.abs(tr.deriv_z))))
        if not (tr.monotone and tr.op_ok and tr.deriv_ok):
            bad.append(name)
    ok = not bad
    record(9, "trace decrease", ok,
           f"{len(_trace_families())} families monotone; derivative max |z| {worst:.2f} (<= 4)"
           + (f"; failing: {bad}" if bad else ""), time.perf_counter() - t0)
    assert ok


def test_c10_tightness_body_e2():
    t0 = time.perf_counter()
    rep = run_scenario({"scenario": "E2", "seed": 0}, Registry(DEFAULT_PATH), workers=WORKERS)
    rt = time.perf_counter() - t0
    fails = [a.invariant for a in rep.assertions if not a.passed] + rep.errors
    peaks = {r["n"]: r["t_peak"] for r in rep.records if r.get("name") == "e2_peak"}
    ok = rep.passed and rt < 600
    record(10, "tightness body variance profile", ok,
           f"{sum(a.passed for a in rep.assertions)}/{len(rep.assertions)} assertions, peaks "
           + ", ".join(f"n={n}: t={t:.3g}" for n, t in peaks.items())
           + (f"; failing: {fails[:5]}" if fails else ""), rt)
    assert ok


def test_c11_rotational_class_e4():
    t0 = time.perf_counter()
    rep = run_scenario({"scenario": "E4", "seed": 0}, Registry(DEFAULT_PATH), workers=WORKERS)
    fails = [a.invariant for a in rep.assertions if not a.passed] + rep.errors
    record(11, "rotational class", rep.passed,
           f"{sum(a.passed for a in rep.assertions)}/{len(rep.assertions)} assertions"
           + (f"; failing: {fails[:5]}" if fails else ""), time.perf_counter() - t0)
    assert rep.passed


# E2, E5 and E6 at full size take minutes each; their determinism is checked on
# reduced configs that exercise every code path (samplers, ensembles, pools).
DETERMINISM_CONFIGS = {
    "E1": {},
    "E2": {"ns": [16], "N": 400, "n_chains": 4, "t_points": 3, "rejection_N": 500, "slice_points": 5,
           "slice_n_mc": 5000},
    "E3": {},
    "E4": {},
    "E5": {"N": 2000, "n_paths": 100, "T": 0.2, "entropy_T": 0.1, "cap_paths": 1, "cap_t": [0.1, 0.2]},
    "E6": {"N": 2000, "path_N": 2000, "path_paths": 100, "path_sigma_paths": 4, "path_T": 0.1,
           "k_ns": [4], "t_grid": [0.0, 1.0], "h_magnitudes": [1.0], "n_random": 1},
}


def test_c12_determinism():
    t0 = time.perf_counter()
    diffs = []
    with tempfile.TemporaryDirectory() as tmp:
        for sid, params in DETERMINISM_CONFIGS.items():
            dirs = []
            for rerun in range(2):
                reg = Registry(Path(tmp) / f"reg_{sid}_{rerun}.json", mode="fit")
                rep = run_scenario({"scenario": sid, "seed": 3, "params": params}, reg, workers=WORKERS)
                out = Path(tmp) / f"{sid}_{rerun}"
                emit_tables(rep, out)
                dirs.append(out)
            csvs = sorted(p.name for p in dirs[0].glob("*.csv"))
            if not csvs or csvs != sorted(p.name for p in dirs[1].glob("*.csv")):
                diffs.append(f"{sid}: table sets differ")
                continue
            _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], csvs, shallow=False)
            diffs += [f"{sid}/{m}" for m in mismatch + errors]
    ok = not diffs
    record(12, "determinism", ok, f"{len(DETERMINISM_CONFIGS)} scenarios re-run, CSVs byte-identical"
           + (f"; differing: {diffs}" if diffs else ""), time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
