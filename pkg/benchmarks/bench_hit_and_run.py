"""Hit-and-run throughput: numba kernel vs vectorized numpy fallback.

    python3 benchmarks/bench_hit_and_run.py [--steps 4000] [--chains 8] [--repeat 3]

Times both backends on the cube, the ball and the tightness body (with and
without the Gaussian factor), checks that short chains agree elementwise,
and prints steps per second and the speedup.  Setting
LOGSOBLAB_DISABLE_NUMBA=1 makes the package default to the numpy path; this
script always runs both explicitly.
"""
import argparse
import time

import numpy as np

from logsoblab._accel import HAVE_NUMBA
from logsoblab.kernels import run_hit_and_run
from logsoblab.measures import ball_body, cube_body, make_bizeul_body
from logsoblab.sampling import make_rng


def _time(body, backend, steps, chains, t, repeat):
    best = np.inf
    for r in range(repeat):
        rngs = [make_rng(r, 0, c) for c in range(chains)]
        X0 = np.tile(body.interior, (chains, 1))
        t0 = time.perf_counter()
        run_hit_and_run(body, X0, rngs, steps, 0, 1, t, backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=4000, help="steps per chain")
    ap.add_argument("--chains", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3, help="best of this many runs")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return 1
    cases = [("cube d=16", cube_body(1.0, 16), 0.0), ("ball d=16", ball_body(4.0, 16), 0.0),
             ("body n=64", make_bizeul_body(64, 8.0), 0.0), ("body n=64 t=0.5", make_bizeul_body(64, 8.0), 0.5)]
    # compile once outside the timings
    for _, body, t in cases:
        _time(body, "numba", 2, 1, t, 1)
    print(f"{'case':18s} {'numba s':>9s} {'numpy s':>9s} {'numba steps/s':>14s} {'speedup':>8s}  short-chain diff")
    for name, body, t in cases:
        tn = _time(body, "numba", args.steps, args.chains, t, args.repeat)
        tp = _time(body, "numpy", args.steps, args.chains, t, args.repeat)
        X0 = np.tile(body.interior, (2, 1))
        a = run_hit_and_run(body, X0, [make_rng(9, 0, c) for c in range(2)], 30, 0, 1, t, "numba")
        b = run_hit_and_run(body, X0, [make_rng(9, 0, c) for c in range(2)], 30, 0, 1, t, "numpy")
        rate = args.steps * args.chains / tn
        print(f"{name:18s} {tn:9.3f} {tp:9.3f} {rate:14.0f} {tp / tn:8.1f}  {np.max(np.abs(a - b)):.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
