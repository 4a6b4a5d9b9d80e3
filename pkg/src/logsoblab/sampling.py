"""Weighted sample clouds, exact and MCMC samplers, and tilt reweighting.

Randomness comes from numpy's Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=stream)``; chain ``c`` of a call with seed
``s`` uses stream ``(stream_id, c)``, so results are reproducible across
platforms and independent of the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegeneracyError, InputError, SamplerError, StepSizeError
from .measures import (BizeulBody, ConvexBody, Gaussian, Measure, OneDimGrid, Product,
                       RadialProfile, SmoothPotential, TiltParams, UniformBall, UniformCube,
                       body_of, log_density_unnormalized, tilt_log_factor)
from .stats import n_eff as _n_eff
from .stats import normalize_log_weights, wcov, wmean

DEFAULT_NEFF_FLOOR = 100


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``(seed, stream...)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class WeightedCloud:
    """Points (N, d) with nonnegative weights summing to one."""

    points: np.ndarray
    weights: np.ndarray
    seed: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise InputError("points must be an (N, d) matrix")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise InputError("weights must have one entry per point")
        if w.size and (np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12):
            raise InputError("weights must be nonnegative and sum to one")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, seed=0, provenance=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        N = pts.shape[0]
        w = np.full(N, 1.0 / N) if N else np.zeros(0)
        return cls(pts, w, seed, dict(provenance or {}))

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_eff(self) -> float:
        return _n_eff(self.weights)

    @property
    def mean(self) -> np.ndarray:
        return wmean(self.points, self.weights)

    @property
    def cov(self) -> np.ndarray:
        return wcov(self.points, self.weights)

    def with_log_weights(self, logw, provenance=None) -> "WeightedCloud":
        prov = dict(self.provenance)
        prov.update(provenance or {})
        return WeightedCloud(self.points, normalize_log_weights(logw), self.seed, prov)

    def centered(self) -> "WeightedCloud":
        return WeightedCloud(self.points - self.mean, self.weights, self.seed, self.provenance)

    def scaled(self, c: float) -> "WeightedCloud":
        return WeightedCloud(c * self.points, self.weights, self.seed, self.provenance)

    def marginal(self, theta) -> np.ndarray:
        return self.points @ np.asarray(theta, dtype=float)

    def check_support(self, spec: Measure, n_check: int = 200, tol: float = 1e-9) -> bool:
        """Membership check on a deterministic random subsample."""
        if self.N == 0:
            return True
        idx = make_rng(self.seed, 99).choice(self.N, size=min(n_check, self.N), replace=False)
        pts = self.points[idx]
        if isinstance(spec, (UniformCube, UniformBall, BizeulBody)):
            return bool(np.all(spec.body.contains(pts, tol=tol)))
        return bool(np.all(np.isfinite(spec.log_density(pts))))

    # -- serialization
    def save(self, path) -> None:
        """Binary ``.npy`` matrix (points then weights column) plus a JSON sidecar."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), np.column_stack([self.points, self.weights]))
        side = {"seed": self.seed, "provenance": self.provenance, "N": self.N, "dim": self.dim}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True, default=_jsonable))

    @classmethod
    def load(cls, path) -> "WeightedCloud":
        path = Path(path)
        arr = np.load(path.with_suffix(".npy"))
        side = json.loads(path.with_suffix(".json").read_text())
        return cls(arr[:, :-1], arr[:, -1], side["seed"], side["provenance"])

    def to_csv(self, path, max_rows: int = 100_000) -> None:
        if self.N > max_rows:
            raise InputError(f"cloud has {self.N} rows; CSV export is for clouds up to {max_rows}")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.dim)] + ["weight"])
            for p, wt in zip(self.points, self.weights):
                w.writerow([repr(float(v)) for v in p] + [repr(float(wt))])


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


@dataclass
class Estimate:
    """A value with its standard error, effective sample size and seed."""

    value: float
    stderr: float = 0.0
    n_eff: float = math.inf
    seed: int | None = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise InputError("stderr must be nonnegative")

    def __float__(self):
        return float(self.value)

    def to_record(self) -> dict:
        val = self.value.tolist() if isinstance(self.value, np.ndarray) else self.value
        return json.loads(json.dumps({"name": self.name, "value": val, "stderr": self.stderr,
                                      "n_eff": None if math.isinf(self.n_eff) else self.n_eff,
                                      "seed": self.seed, "parameters": self.params},
                                     default=_jsonable))


def batch_means_stderr(phi, n_chains: int) -> float:
    """Standard error of the mean of a chain-major array of MCMC values."""
    phi = np.asarray(phi, dtype=float).reshape(n_chains, -1)
    if n_chains < 2:
        raise InputError("batch means need at least two chains")
    return float(np.std(phi.mean(axis=1), ddof=1) / math.sqrt(n_chains))


# --------------------------------------------------------- hit-and-run


def hit_and_run(body: ConvexBody, N: int, burn_in: int | None = None, thinning: int | None = None,
                seed: int = 0, t: float = 0.0, n_chains: int = 8, backend: str | None = None,
                x0=None, stream: int = 0) -> WeightedCloud:
    """Hit-and-run on a convex body, targeting ``exp(-t|x|^2)`` restricted to it.

    ``n_chains`` independent chains start at the interior point (or ``x0``);
    the returned points are chain-major (``N / n_chains`` per chain), so
    :func:`batch_means_stderr` applies.  Defaults: burn-in ``10 d^2``,
    thinning ``d``.
    """
    d = body.dim
    if not body.contains(body.interior):
        raise SamplerError("interior point fails the membership oracle")
    burn_in = 10 * d * d if burn_in is None else int(burn_in)
    thinning = d if thinning is None else int(thinning)
    prov = {"sampler": "hit_and_run", "body": body.kind, "params": list(body.params), "t": t,
            "burn_in": burn_in, "thinning": thinning, "n_chains": n_chains}
    if N == 0:
        return WeightedCloud(np.zeros((0, d)), np.zeros(0), seed, prov)
    n_chains = max(1, min(n_chains, N))
    n_keep = -(-N // n_chains)
    rngs = [make_rng(seed, stream, c) for c in range(n_chains)]
    start = np.tile(body.interior if x0 is None else np.asarray(x0, float), (n_chains, 1))
    out = kernels.run_hit_and_run(body, start, rngs, n_keep, burn_in, thinning, t, backend)
    pts = out[:, :N // n_chains if N % n_chains == 0 else n_keep].reshape(-1, d)[:N]
    prov["n_chains"] = n_chains
    return WeightedCloud.uniform(pts, seed, prov)


def rejection_sample_body(body: ConvexBody, N: int, seed: int = 0, t: float = 0.0,
                          batch: int = 100_000, max_batches: int = 10_000) -> WeightedCloud:
    """Exact draws from ``exp(-t|x|^2)`` on the body via bounding-box proposals."""
    from scipy.special import ndtr, ndtri

    rng = make_rng(seed, 7)
    d = body.dim
    got, kept = 0, []
    lo, hi = body.lo, body.hi
    if t > 0:
        s = 1.0 / math.sqrt(2.0 * t)
        plo, phi = ndtr(lo / s), ndtr(hi / s)
    for _ in range(max_batches):
        if got >= N:
            break
        u = rng.random((batch, d))
        x = s * ndtri(plo + u * (phi - plo)) if t > 0 else lo + u * (hi - lo)
        ok = body.contains(x)
        kept.append(x[ok])
        got += int(ok.sum())
    else:
        raise SamplerError("rejection sampler exhausted its proposal budget")
    pts = np.concatenate(kept)[:N] if kept else np.zeros((0, d))
    return WeightedCloud.uniform(pts, seed, {"sampler": "rejection", "body": body.kind, "t": t})


# ---------------------------------------------------------------- MALA


def mala_sample(spec: Measure, tilt: TiltParams | None = None, N: int = 10_000, step: float = 0.5,
                burn_in: int = 1000, seed: int = 0, n_chains: int = 32, thinning: int = 1,
                tune: bool = True) -> WeightedCloud:
    """Metropolis-adjusted Langevin chains targeting ``mu_{t,h}``.

    During burn-in the step is halved (acceptance < 0.45) or doubled
    (acceptance > 0.8) after every block of 50 steps; nothing adapts after
    burn-in.  Raises :class:`StepSizeError` if the final acceptance is
    below 0.1.
    """
    if not spec.has_gradient:
        raise InputError(f"{spec.family} has no gradient oracle")
    if not step > 0:
        raise InputError("step must be positive")
    tilt = tilt or TiltParams()
    d = spec.dim
    h = tilt.h_vec(d)

    def logp(x):
        return log_density_unnormalized(spec, tilt, x)

    def grad(x):
        return spec.grad_log_density(x) - 2.0 * tilt.t * x + h

    rng = make_rng(seed, 3)
    n_chains = max(1, min(n_chains, max(N, 1)))
    X = np.tile(spec.center(), (n_chains, 1)).astype(float)
    lp, g = logp(X), grad(X)

    def sweep(X, lp, g, eps):
        noise = rng.standard_normal(X.shape)
        Y = X + eps * g + math.sqrt(2.0 * eps) * noise
        lpy, gy = logp(Y), grad(Y)
        fwd = -np.sum((Y - X - eps * g) ** 2, axis=1) / (4.0 * eps)
        bwd = -np.sum((X - Y - eps * gy) ** 2, axis=1) / (4.0 * eps)
        with np.errstate(invalid="ignore"):
            log_a = lpy - lp + bwd - fwd
        acc = np.log(rng.random(n_chains)) < np.where(np.isnan(log_a), -np.inf, log_a)
        X = np.where(acc[:, None], Y, X)
        lp = np.where(acc, lpy, lp)
        g = np.where(acc[:, None], gy, g)
        return X, lp, g, acc

    eps = float(step)
    block_acc = []
    for k in range(burn_in):
        X, lp, g, acc = sweep(X, lp, g, eps)
        block_acc.append(acc.mean())
        if tune and len(block_acc) == 50:
            rate = float(np.mean(block_acc))
            if rate < 0.45:
                eps *= 0.5
            elif rate > 0.8:
                eps *= 2.0
            block_acc = []
    n_keep = -(-N // n_chains) if N else 0
    out = np.empty((n_chains, n_keep, d))
    n_acc = 0
    for k in range(n_keep * thinning):
        X, lp, g, acc = sweep(X, lp, g, eps)
        n_acc += int(acc.sum())
        if (k + 1) % thinning == 0:
            out[:, (k + 1) // thinning - 1] = X
    total = n_keep * thinning * n_chains
    rate = n_acc / total if total else 1.0
    if total and rate < 0.1:
        raise StepSizeError(f"MALA acceptance {rate:.3f} below 0.1 at step {eps:.3g}; "
                            "reduce the step size", rate, eps)
    prov = {"sampler": "mala", "family": spec.family, "t": tilt.t, "h": h.tolist(),
            "step": eps, "acceptance": rate, "n_chains": n_chains, "burn_in": burn_in}
    per = N // n_chains if N % n_chains == 0 else n_keep
    return WeightedCloud.uniform(out[:, :per].reshape(-1, d)[:N], seed, prov)


# ------------------------------------------------------- exact samplers


def _unit_directions(rng, N, d):
    z = rng.standard_normal((N, d))
    return z / np.linalg.norm(z, axis=1)[:, None]


def draw(spec: Measure, N: int, seed: int = 0) -> WeightedCloud:
    """Independent draws from ``spec`` (exact where a direct sampler exists)."""
    from .quadrature import engine_1d, radial_engine

    rng = make_rng(seed, 1)
    d = spec.dim
    if isinstance(spec, Gaussian):
        z = rng.standard_normal((N, d))
        pts = spec.mean + z @ spec._chol.T
    elif isinstance(spec, UniformCube):
        pts = spec.half_width * (2.0 * rng.random((N, d)) - 1.0)
    elif isinstance(spec, UniformBall):
        u = _unit_directions(rng, N, d)
        pts = spec.radius * u * rng.random(N)[:, None] ** (1.0 / d)
    elif isinstance(spec, (OneDimGrid, Product)) or (d == 1 and not isinstance(spec, BizeulBody)):
        comps = spec.components if isinstance(spec, Product) else (spec,)
        cols = []
        for c in comps:
            if isinstance(c, Gaussian):
                cols.append(c.mean[0] + math.sqrt(c.cov[0, 0]) * rng.standard_normal(N))
            elif isinstance(c, UniformCube):
                cols.append(c.half_width * (2.0 * rng.random(N) - 1.0))
            else:
                cols.append(engine_1d(c, 20001).sample(N, rng))
        pts = np.column_stack(cols)
    elif isinstance(spec, (RadialProfile, SmoothPotential)):
        rad = radial_engine(spec, n=20001)
        u = _unit_directions(rng, N, d)
        pts = u * rad.sample(N, rng)[:, None]
    elif isinstance(spec, BizeulBody):
        return rejection_sample_body(spec.body, N, seed)
    else:
        raise InputError(f"no direct sampler for {spec.family}")
    return WeightedCloud.uniform(pts, seed, {"sampler": "exact", "family": spec.family})


def sample_1d_quadrature(spec: Measure, n: int = 4001):
    """Exact-moment engine (mean, variance, CDF, inverse-CDF sampler) for a 1D law."""
    from .quadrature import engine_1d

    return engine_1d(spec, n)


def sample_measure(spec: Measure, N: int, seed: int = 0, tilt: TiltParams | None = None,
                   **kwargs) -> WeightedCloud:
    """Samples of ``mu_{t,h}``: exact draws + reweighting when safe, else MCMC."""
    tilt = tilt or TiltParams()
    if tilt.is_identity:
        try:
            return draw(spec, N, seed)
        except InputError:
            if not spec.has_gradient:
                raise
            return mala_sample(spec, tilt, N, seed=seed, **kwargs)
    if isinstance(spec, Gaussian):
        prec = spec._prec + 2.0 * tilt.t * np.eye(spec.dim)
        cov = np.linalg.inv(prec)
        mean = cov @ (spec._prec @ spec.mean + tilt.h_vec(spec.dim))
        return draw(Gaussian(mean, 0.5 * (cov + cov.T)), N, seed)
    if isinstance(spec, (UniformCube, UniformBall, BizeulBody)) and (tilt.h is None or not np.any(tilt.h)):
        return hit_and_run(body_of(spec), N, seed=seed, t=tilt.t, **kwargs)
    if spec.has_gradient:
        return mala_sample(spec, tilt, N, seed=seed, **kwargs)
    return reweight_tilt(draw(spec, N, seed), tilt)


def reweight_tilt(cloud: WeightedCloud, tilt: TiltParams, floor: float = DEFAULT_NEFF_FLOOR) -> WeightedCloud:
    """Multiply weights by ``exp(-t|x|^2 + h.x)`` and renormalize."""
    if cloud.N == 0:
        raise InputError("cannot reweight an empty cloud")
    if tilt.is_identity:
        return cloud
    with np.errstate(divide="ignore"):
        logw = np.log(cloud.weights) + tilt_log_factor(cloud.points, tilt)
    out = cloud.with_log_weights(logw, {"tilt_t": tilt.t,
                                        "tilt_h": None if tilt.h is None else tilt.h.tolist()})
    ne = out.n_eff
    if ne < floor:
        raise DegeneracyError(
            f"effective sample size {ne:.1f} below floor {floor}; sample mu_(t,h) directly "
            "(mala_sample or hit_and_run with t > 0) instead of reweighting", ne, floor)
    return out
