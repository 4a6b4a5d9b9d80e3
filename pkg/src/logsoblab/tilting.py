"""Log-Laplace calculus of Gaussian-perturbed tilts ``mu_{t,h}``.

Tilted moments come from one of three sources:

* a ``WeightedCloud`` of ``mu`` (self-normalized reweighting, with an
  effective-sample-size floor);
* a quadrature engine (``ProductQuadrature`` or ``Quadrature1D``), exact
  to quadrature tolerance;
* a ``TiltSampler`` that reweights when safe and otherwise samples
  ``mu_{t,h}`` directly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, DegeneracyError, InputError
from .measures import Measure, TiltParams
from .quadrature import ProductQuadrature, Quadrature1D
from .sampling import (DEFAULT_NEFF_FLOOR, Estimate, WeightedCloud, reweight_tilt, sample_measure)
from .stats import n_eff as _n_eff
from .stats import opnorm, snis_stderr


def log_laplace(cloud: WeightedCloud, h, floor: float = DEFAULT_NEFF_FLOOR) -> Estimate:
    """``log E exp(h.X)`` from a cloud of ``mu``."""
    h = np.asarray(h, dtype=float)
    if not np.any(h):
        return Estimate(0.0, 0.0, cloud.n_eff, cloud.seed, "log_laplace", {"h": h.tolist()})
    with np.errstate(divide="ignore"):
        lw = np.log(cloud.weights)
    e = lw + cloud.points @ h
    L = float(logsumexp(e))
    w_t = np.exp(e - L)
    ne = _n_eff(w_t)
    if ne < floor:
        raise DegeneracyError(f"effective sample size {ne:.1f} below floor {floor} at h={h}; "
                              "sample the tilted measure directly", ne, floor)
    se = snis_stderr(np.exp(cloud.points @ h - L), cloud.weights)
    return Estimate(L, se, ne, cloud.seed, "log_laplace", {"h": h.tolist()})


@dataclass
class TiltMoments:
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    n_eff: float
    method: str

    @property
    def opnorm(self) -> float:
        return opnorm(self.cov)


def _cloud_moments(cloud: WeightedCloud, method: str) -> TiltMoments:
    X, w = cloud.points, cloud.weights
    m = w @ X
    Xc = X - m
    C = (Xc * w[:, None]).T @ Xc
    wm = w[:, None] * Xc
    mean_se = np.sqrt(np.sum(wm**2, axis=0))
    d = X.shape[1]
    cov_se = np.empty((d, d))
    for i in range(d):
        infl = w[:, None] * (Xc[:, [i]] * Xc - C[i])
        cov_se[i] = np.sqrt(np.sum(infl**2, axis=0))
    return TiltMoments(m, C, mean_se, cov_se, cloud.n_eff, method)


@dataclass
class TiltSampler:
    """Reweights a base cloud, falling back to direct sampling of ``mu_{t,h}``."""

    measure: Measure
    cloud: WeightedCloud
    N_direct: int = 20_000
    seed: int = 0
    floor: float = DEFAULT_NEFF_FLOOR
    sampler_kwargs: dict = field(default_factory=dict)

    def tilted_cloud(self, tilt: TiltParams) -> tuple[WeightedCloud, str]:
        try:
            return reweight_tilt(self.cloud, tilt, self.floor), "reweight"
        except DegeneracyError:
            c = sample_measure(self.measure, self.N_direct, self.seed, tilt, **self.sampler_kwargs)
            return c, "direct"


def tilt_moments(source, tilt: TiltParams | None = None, floor: float = DEFAULT_NEFF_FLOOR,
                 N: int = 20_000, seed: int = 0) -> TiltMoments:
    """Barycenter and covariance of ``mu_{t,h}`` with standard errors."""
    tilt = tilt or TiltParams()
    if isinstance(source, ProductQuadrature):
        m, C = source.tilt_moments(tilt.t, tilt.h_vec(source.dim))
        z = np.zeros_like(m)
        return TiltMoments(m, C, z, np.zeros_like(C), math.inf, "quadrature")
    if isinstance(source, Quadrature1D):
        e = source.tilted(tilt.t, float(tilt.h_vec(1)[0])) if not tilt.is_identity else source
        return TiltMoments(np.array([e.mean]), np.array([[e.var]]), np.zeros(1), np.zeros((1, 1)),
                           math.inf, "quadrature")
    if isinstance(source, WeightedCloud):
        return _cloud_moments(reweight_tilt(source, tilt, floor), "reweight")
    if isinstance(source, TiltSampler):
        c, how = source.tilted_cloud(tilt)
        return _cloud_moments(c, how)
    if isinstance(source, Measure):
        return _cloud_moments(sample_measure(source, N, seed, tilt), "direct")
    raise InputError(f"unsupported tilt source {type(source).__name__}")


# ------------------------------------------------------------ scans


@dataclass
class TiltScanReport:
    """Per-point tilted moments plus running suprema.

    ``beta_hat`` is the square root of the largest covariance operator norm
    over the ``t = 0`` points (a lower bound for the tilt-stability
    constant) and ``M_hat`` the same over all points (strong version).
    """

    rows: list
    beta_hat: float
    M_hat: float
    argsup_beta: dict
    argsup_M: dict

    def opnorm_sup_by_t(self) -> dict:
        out: dict = {}
        for r in self.rows:
            if r["ok"]:
                out[r["t"]] = max(out.get(r["t"], 0.0), r["opnorm"])
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "h_index", "h_norm", "opnorm", "n_eff", "method", "ok"])
            for r in self.rows:
                w.writerow([repr(r["t"]), r["h_index"], repr(r["h_norm"]), repr(r["opnorm"]),
                            repr(r["n_eff"]), r["method"], int(r["ok"])])

    def summary(self) -> dict:
        return {"beta_hat": self.beta_hat, "M_hat": self.M_hat, "argsup_beta": self.argsup_beta,
                "argsup_M": self.argsup_M, "n_points": len(self.rows),
                "n_failed": sum(not r["ok"] for r in self.rows),
                "note": "suprema over a finite grid: lower bounds only"}


def h_grid(dim: int, magnitudes, n_random: int = 0, seed: int = 0, directions=None) -> list:
    """Rays (coordinate axes with both signs, optional random directions) times magnitudes."""
    from .sampling import make_rng

    dirs = list(np.vstack([np.eye(dim), -np.eye(dim)])) if directions is None else \
        [np.asarray(v, float) / np.linalg.norm(v) for v in np.atleast_2d(directions)]
    if n_random:
        z = make_rng(seed, 9).standard_normal((n_random, dim))
        dirs += list(z / np.linalg.norm(z, axis=1)[:, None])
    hs = [np.zeros(dim)]
    for d in dirs:
        for m in magnitudes:
            hs.append(m * d)
    return hs


def strong_tilt_scan(source, t_grid, hs, floor: float = DEFAULT_NEFF_FLOOR) -> TiltScanReport:
    """Scan ``||Cov(mu_{t,h})||_op`` over ``t_grid x hs``; failures are recorded."""
    rows = []
    for t in t_grid:
        for k, h in enumerate(hs):
            row = {"t": float(t), "h_index": k, "h_norm": float(np.linalg.norm(h)), "h": np.asarray(h).tolist()}
            try:
                tm = tilt_moments(source, TiltParams(float(t), h), floor)
                row.update(opnorm=tm.opnorm, n_eff=tm.n_eff, method=tm.method, ok=True)
            except (DegeneracyError, InputError, RuntimeError) as exc:
                row.update(opnorm=math.nan, n_eff=getattr(exc, "n_eff", math.nan) or math.nan,
                           method=f"failed:{type(exc).__name__}", ok=False)
            rows.append(row)
    ok = [r for r in rows if r["ok"]]
    zero = [r for r in ok if r["t"] == 0.0]
    bmax = max(zero, key=lambda r: r["opnorm"]) if zero else None
    mmax = max(ok, key=lambda r: r["opnorm"]) if ok else None
    return TiltScanReport(rows, math.sqrt(bmax["opnorm"]) if bmax else math.nan,
                          math.sqrt(mmax["opnorm"]) if mmax else math.nan,
                          _arg(bmax), _arg(mmax))


def _arg(r):
    return {} if r is None else {"t": r["t"], "h": r["h"]}


def tilt_stability_scan(source, hs, floor: float = DEFAULT_NEFF_FLOOR) -> TiltScanReport:
    """``t = 0`` slice of :func:`strong_tilt_scan`."""
    return strong_tilt_scan(source, [0.0], hs, floor)


# ---------------------------------------------------------- tilt map


@dataclass
class InversionResult:
    h0: np.ndarray
    residuals: list
    iterations: int


def _barycenter(source, h0):
    return tilt_moments(source, TiltParams(0.0, h0), floor=0).mean


def tilt_map(source, t: float, h0) -> np.ndarray:
    """``F(h0) = h0 + 2 t * barycenter(tau_{h0} mu)``."""
    h0 = np.atleast_1d(np.asarray(h0, dtype=float))
    return h0 + 2.0 * t * _barycenter(source, h0)


def invert_tilt_map(source, t: float, h, tol: float = 1e-8, max_iter: int = 500) -> InversionResult:
    """Solve ``F(h0) = h`` by damped fixed-point iteration.

    ``h0 <- h0 - eta (F(h0) - h)`` with ``eta = 1 / (1 + 2 t lam)``, ``lam``
    the largest covariance operator norm met so far; the step is halved
    whenever the residual would grow, so the residual sequence is
    nonincreasing.  With a cloud source the map is evaluated on the same
    cloud at every iterate, hence deterministic.
    """
    if not t > 0:
        raise InputError("tilt-map inversion needs t > 0")
    h = np.atleast_1d(np.asarray(h, dtype=float))
    h0 = h.copy()
    tm = tilt_moments(source, TiltParams(0.0, h0), floor=0)
    lam = tm.opnorm
    res_vec = h0 + 2.0 * t * tm.mean - h
    res = float(np.linalg.norm(res_vec))
    trace = [res]
    for it in range(max_iter):
        if res <= tol:
            return InversionResult(h0, trace, it)
        eta = 1.0 / (1.0 + 2.0 * t * lam)
        for _ in range(40):
            cand = h0 - eta * res_vec
            tm_c = tilt_moments(source, TiltParams(0.0, cand), floor=0)
            rv = cand + 2.0 * t * tm_c.mean - h
            r = float(np.linalg.norm(rv))
            if r <= res:
                break
            eta *= 0.5
        else:
            raise ConvergenceError("tilt-map inversion stalled: no damped step decreases the residual", trace)
        h0, res_vec, res = cand, rv, r
        lam = max(lam, tm_c.opnorm)
        trace.append(res)
    if res <= tol:
        return InversionResult(h0, trace, max_iter)
    raise ConvergenceError(f"tilt-map inversion did not reach {tol:g} in {max_iter} iterations "
                           f"(last residual {res:.3e})", trace)


# -------------------------------------------------------------- K(t)


def K_of_t(source, t: float, floor: float = DEFAULT_NEFF_FLOOR) -> Estimate:
    """``K(t) = E exp(-2t|X|^2) / (E exp(-t|X|^2))^2`` (>= 1 by Jensen).

    Cloud sources give a self-normalized estimate with delta-method
    stderr; quadrature sources (product or radial engine of ``|X|``) are
    exact.  The input is assumed centered.
    """
    if t == 0:
        return Estimate(1.0, 0.0, math.inf, None, "K_of_t", {"t": 0.0})
    if isinstance(source, ProductQuadrature):
        return Estimate(source.K_of_t(t), 0.0, math.inf, None, "K_of_t", {"t": t, "method": "product"})
    if isinstance(source, Quadrature1D):  # law of |X|
        v = math.exp(source.log_partition(2.0 * t) - 2.0 * source.log_partition(t))
        return Estimate(v, 0.0, math.inf, None, "K_of_t", {"t": t, "method": "radial"})
    if not isinstance(source, WeightedCloud):
        raise InputError("K_of_t needs a cloud or a quadrature engine")
    r2 = np.einsum("ij,ij->i", source.points, source.points)
    w = source.weights
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    la = logsumexp(lw - 2.0 * t * r2)
    lb = logsumexp(lw - t * r2)
    wa = np.exp(lw - 2.0 * t * r2 - la)
    ne = _n_eff(wa)
    if ne < floor:
        raise DegeneracyError(f"K(t) weights degenerate (n_eff {ne:.1f} < {floor})", ne, floor)
    K = math.exp(la - 2.0 * lb)
    # influence of A/B^2 with A, B rescaled by their own values
    a = np.exp(-2.0 * t * r2 - la)
    b = np.exp(-t * r2 - lb)
    se = K * snis_stderr(a - 2.0 * b, w)
    return Estimate(K, se, ne, source.seed, "K_of_t", {"t": t, "method": "cloud"})


# ------------------------------------------------------ trace decrease


@dataclass
class TraceDecreaseReport:
    t: np.ndarray
    m2: np.ndarray
    m2_se: np.ndarray
    monotone: bool
    opnorm: np.ndarray
    opnorm_se: np.ndarray
    trace0: float
    op_ok: bool
    deriv_t: np.ndarray = None
    deriv: np.ndarray = None
    neg_var: np.ndarray = None
    deriv_z: np.ndarray = None
    deriv_ok: bool = True


def _gauss_weights(cloud, t):
    r2 = np.einsum("ij,ij->i", cloud.points, cloud.points)
    with np.errstate(divide="ignore"):
        lw = np.log(cloud.weights) - t * r2
    return np.exp(lw - logsumexp(lw)), r2


def trace_decrease_check(cloud: WeightedCloud, t_grid, deriv_ts=(), cloud_b: WeightedCloud | None = None,
                         delta: float = 0.01, n_sigma: float = 3.0, deriv_sigma: float = 4.0) -> TraceDecreaseReport:
    """Second moment and covariance of ``nu_t ∝ exp(-t|x|^2) nu`` along ``t_grid``.

    (a) ``int |x|^2 dnu_t`` nonincreasing within ``n_sigma`` standard errors
    of successive differences (common-sample influence functions);
    (b) ``||Cov(nu_t)||_op <= Tr Cov(nu) + n_sigma * stderr``;
    (c) at each ``deriv_ts`` the central difference quotient of (a) matches
    ``-Var_{nu_t}(|x|^2)``, the latter from ``cloud_b`` when given
    (independent estimate), within ``deriv_sigma`` combined standard errors.
    """
    ts = np.asarray(t_grid, dtype=float)
    m2, se, infl_prev = [], [], None
    mono = True
    ops, ops_se = [], []
    for t in ts:
        w, r2 = _gauss_weights(cloud, t)
        m = float(w @ r2)
        infl = w * (r2 - m)
        m2.append(m)
        se.append(float(np.sqrt(np.sum(infl**2))))
        if infl_prev is not None:
            sd = float(np.sqrt(np.sum((infl - infl_prev) ** 2)))
            if m2[-1] > m2[-2] + n_sigma * sd:
                mono = False
        infl_prev = infl
        tc = _cloud_moments(WeightedCloud(cloud.points, w / w.sum(), cloud.seed), "reweight")
        lam, vec = np.linalg.eigh(tc.cov)
        v = vec[:, -1]
        Xc = cloud.points - tc.mean
        q = (Xc @ v) ** 2
        ops.append(float(lam[-1]))
        ops_se.append(float(np.sqrt(np.sum((w * (q - lam[-1])) ** 2))))
    tr0 = float(np.trace(cloud.cov))
    ops, ops_se = np.array(ops), np.array(ops_se)
    rep = TraceDecreaseReport(ts, np.array(m2), np.array(se), mono, ops, ops_se, tr0,
                              bool(np.all(ops <= tr0 + n_sigma * ops_se)))
    if len(deriv_ts):
        dts, D, NV, Z = [], [], [], []
        other = cloud_b if cloud_b is not None else cloud
        for t in deriv_ts:
            if t - delta >= 0:
                pts_, coef = [t - delta, t + delta], [-0.5 / delta, 0.5 / delta]
            else:
                pts_, coef = [t, t + delta, t + 2 * delta], [-1.5 / delta, 2.0 / delta, -0.5 / delta]
            val, infl = 0.0, 0.0
            for tt, c in zip(pts_, coef):
                w, r2 = _gauss_weights(cloud, tt)
                m = float(w @ r2)
                val += c * m
                infl = infl + c * w * (r2 - m)
            se_d = float(np.sqrt(np.sum(infl**2)))
            w, r2 = _gauss_weights(other, t)
            m = float(w @ r2)
            dev = (r2 - m) ** 2
            v = float(w @ dev)
            se_v = float(np.sqrt(np.sum((w * (dev - v)) ** 2)))
            z = (val + v) / math.hypot(se_d, se_v) if (se_d or se_v) else 0.0
            dts.append(t)
            D.append(val)
            NV.append(-v)
            Z.append(z)
        rep.deriv_t, rep.deriv, rep.neg_var, rep.deriv_z = map(np.array, (dts, D, NV, Z))
        rep.deriv_ok = bool(np.all(np.abs(rep.deriv_z) <= deriv_sigma))
    return rep


# --------------------------------------------- sub-gaussian perturbation


@dataclass
class PerturbedSigmaReport:
    t: np.ndarray
    sigma2: np.ndarray
    sigma2_se: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    cap_ok: np.ndarray
    sigma2_base: float
    L: float
    lower_tail_r: np.ndarray
    lower_tail_freq: np.ndarray
    c_tail_needed: float
    n_eff: np.ndarray


def perturbed_sigma_check(cloud: WeightedCloud, t_grid, measure: Measure | None = None, net=None,
                          N_direct: int = 20_000, seed: int = 0, n_sigma: float = 3.0,
                          floor: float = DEFAULT_NEFF_FLOOR) -> PerturbedSigmaReport:
    """sigma-tilde^2 of ``nu_t`` against ``min(sigma^2(nu)(1 + t^2 n L^2), 1/t)``.

    ``L = psi2(|X| - E|X|)`` under ``nu``.  ``ratio`` is the left side over
    the right; the constant in front is fitted elsewhere.  ``cap_ok`` is the
    Bakry-Emery cap ``sigma-tilde^2 <= 1/(2t) + n_sigma * stderr``.  Also
    reports the lower-deviation tail of ``|X|^2`` and the smallest constant
    ``c`` with ``P(|X|^2 <= E|X|^2 - r) <= exp(-c r^2 / (4 E|X|^2 L^2))``.
    """
    from .psi import DirectionNet, psi2_norm, sigma_tilde

    net = net or DirectionNet.build(cloud.dim)
    n = cloud.dim
    r = np.linalg.norm(cloud.points, axis=1)
    w = cloud.weights
    L = psi2_norm(r - w @ r, w, min_neff=0).value
    base = sigma_tilde(cloud, net)
    ts = np.asarray(t_grid, dtype=float)
    s2, s2se, bnd, cap, ne = [], [], [], [], []
    source = TiltSampler(measure, cloud, N_direct, seed, floor) if measure is not None else None
    for t in ts:
        if t == 0:
            c = cloud
        elif source is not None:
            c, _ = source.tilted_cloud(TiltParams(float(t)))
        else:
            c = reweight_tilt(cloud, TiltParams(float(t)), floor)
        e = sigma_tilde(c, net)
        s2.append(e.value**2)
        s2se.append(2.0 * e.value * e.stderr)
        b = base.value**2 * (1.0 + t * t * n * L * L)
        bnd.append(min(b, 1.0 / t) if t > 0 else b)
        cap.append(True if t == 0 else e.value**2 <= 1.0 / (2.0 * t) + n_sigma * s2se[-1])
        ne.append(c.n_eff)
    s2, bnd = np.array(s2), np.array(bnd)
    q = r * r
    Eq = float(w @ q)
    rs = np.linspace(0.0, Eq, 41)[1:]
    freq = np.array([w @ (q <= Eq - rr) for rr in rs])
    with np.errstate(divide="ignore"):
        need = np.where(freq > 0, -np.log(freq) * 4.0 * Eq * L * L / rs**2, np.inf)
    return PerturbedSigmaReport(ts, s2, np.array(s2se), bnd, s2 / bnd, np.array(cap), base.value**2,
                                L, rs, freq, float(np.min(need)), np.array(ne))
