"""Hit-and-run kernels for convex bodies with an optional Gaussian factor.

Two interchangeable backends advance a set of chains:

* ``numba``: a compiled loop over the steps of one chain;
* ``numpy``: the same steps vectorized over chains.

Each chain owns a ``numpy.random.Generator`` and both backends draw from it
in the same order (per step: the direction normals, then one uniform), so
they consume identical randomness and agree to rounding step by step.  Over
long chains rounding differences grow (the map is expanding on average), so
long runs of the two backends agree in distribution, not elementwise.  The target on the
body is ``exp(-t|x|^2)`` (uniform for ``t = 0``); the 1D conditional on a
chord is then a truncated normal.

Select the backend with ``LOGSOBLAB_DISABLE_NUMBA=1`` or the ``backend``
argument of :func:`run_hit_and_run`.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri, ndtri_exp

from ._accel import default_backend, njit
from .errors import SamplerError

KIND_CODES = {"cube": 0, "ball": 1, "bizeul": 2}
N_BISECT = 64
_SQRT2 = math.sqrt(2.0)
_SQRTPI = math.sqrt(math.pi)


# ------------------------------------------------- scalar special functions


@njit(cache=True)
def erfcx_scalar(x):
    """Scaled complementary error function ``exp(x^2) erfc(x)`` for x >= 0."""
    if x < 25.0:
        return math.erfc(x) * math.exp(x * x)
    # asymptotic series, truncation error < 1e-15 for x >= 25
    y = 0.5 / (x * x)
    s = 1.0 - y * (1.0 - 3.0 * y * (1.0 - 5.0 * y * (1.0 - 7.0 * y * (1.0 - 9.0 * y * (1.0 - 11.0 * y)))))
    return s / (x * _SQRTPI)


@njit(cache=True)
def log_q_scalar(z):
    """``log P(N(0,1) > z)``."""
    if z >= 0.0:
        return math.log(0.5 * erfcx_scalar(z / _SQRT2)) - 0.5 * z * z
    return math.log1p(-0.5 * math.erfc(-z / _SQRT2))


@njit(cache=True)
def _mills_inv(z):
    # phi(z) / Q(z), stable for large positive z
    if z >= 0.0:
        return 2.0 / (math.sqrt(2.0 * math.pi) * erfcx_scalar(z / _SQRT2))
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) / (1.0 - 0.5 * math.erfc(-z / _SQRT2))


@njit(cache=True)
def ndtri_scalar(p):
    """Inverse standard normal CDF (rational start, two Newton polishes)."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    a0, a1, a2, a3, a4, a5 = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
                              1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
    b0, b1, b2, b3, b4 = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
                          6.680131188771972e01, -1.328068155288572e01)
    c0, c1, c2, c3, c4, c5 = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
                              -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
    d0, d1, d2, d3 = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
                      3.754408661907416e00)
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        z = (((((c0 * q + c1) * q + c2) * q + c3) * q + c4) * q + c5) / \
            ((((d0 * q + d1) * q + d2) * q + d3) * q + 1.0)
    elif p > 1.0 - plow:
        q = math.sqrt(-2.0 * math.log1p(-p))
        z = -(((((c0 * q + c1) * q + c2) * q + c3) * q + c4) * q + c5) / \
            ((((d0 * q + d1) * q + d2) * q + d3) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        z = (((((a0 * r + a1) * r + a2) * r + a3) * r + a4) * r + a5) * q / \
            (((((b0 * r + b1) * r + b2) * r + b3) * r + b4) * r + 1.0)
    # polish in the tail that is better conditioned
    if p < 0.5:
        lp = math.log(p)
        for _ in range(2):
            z = z - (log_q_scalar(-z) - lp) / _mills_inv(-z)
    else:
        lq = math.log1p(-p)
        for _ in range(2):
            z = z + (log_q_scalar(z) - lq) / _mills_inv(z)
    return z


@njit(cache=True)
def q_inv_log_scalar(lp):
    """Solve ``log Q(z) = lp`` for z (upper-tail quantile from a log-probability)."""
    if lp >= 0.0:
        return -np.inf
    if lp > -700.0:
        z = -ndtri_scalar(math.exp(lp))
        if lp > -30.0:
            return z
    else:
        m = -2.0 * lp
        z = math.sqrt(m - math.log(2.0 * math.pi * m))
    for _ in range(60):
        step = (lp - log_q_scalar(z)) / _mills_inv(z)
        z = z - step
        if abs(step) <= 1e-15 * (1.0 + abs(z)):
            break
    return z


@njit(cache=True)
def trunc_std_normal_scalar(alpha, beta, u):
    """Inverse-CDF draw of N(0,1) restricted to [alpha, beta] at uniform ``u``."""
    if alpha >= 0.0:
        la = log_q_scalar(alpha)
        lb = log_q_scalar(beta) if beta < np.inf else -np.inf
        z = q_inv_log_scalar(la + math.log1p(u * math.expm1(lb - la)))
    elif beta <= 0.0:
        # log CDF at the ends, CDF(z) = CDF(alpha) + u (CDF(beta) - CDF(alpha))
        lb = log_q_scalar(-beta)
        la = log_q_scalar(-alpha) if alpha > -np.inf else -np.inf
        z = -q_inv_log_scalar(lb + math.log1p((1.0 - u) * math.expm1(la - lb)))
    else:
        pa = 0.5 * math.erfc(-alpha / _SQRT2)
        pb = 0.5 * math.erfc(-beta / _SQRT2)
        z = ndtri_scalar(pa + u * (pb - pa))
    return min(max(z, alpha), beta)


def trunc_std_normal(alpha, beta, u):
    """Vectorized counterpart of :func:`trunc_std_normal_scalar` (scipy special functions)."""
    alpha, beta, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, beta, u)))
    z = np.empty(alpha.shape)
    right = alpha >= 0
    left = (beta <= 0) & ~right
    mid = ~(right | left)
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(right):
            la, lb = log_ndtr(-alpha[right]), log_ndtr(-beta[right])
            lp = la + np.log1p(u[right] * np.expm1(lb - la))
            z[right] = -ndtri_exp(lp)
        if np.any(left):
            lb, la = log_ndtr(beta[left]), log_ndtr(alpha[left])
            lp = lb + np.log1p((1.0 - u[left]) * np.expm1(la - lb))
            z[left] = ndtri_exp(lp)
        if np.any(mid):
            pa, pb = ndtr(alpha[mid]), ndtr(beta[mid])
            z[mid] = ndtri(pa + u[mid] * (pb - pa))
    return np.clip(z, alpha, beta)


# ------------------------------------------------------------ numba path


@njit(cache=True)
def _box_chord(x, u, lo, hi):
    smin, smax = -np.inf, np.inf
    for j in range(x.size):
        if u[j] > 0.0:
            a, b = (lo[j] - x[j]) / u[j], (hi[j] - x[j]) / u[j]
        elif u[j] < 0.0:
            a, b = (hi[j] - x[j]) / u[j], (lo[j] - x[j]) / u[j]
        else:
            continue
        smin = max(smin, a)
        smax = min(smax, b)
    return smin, smax


@njit(cache=True)
def _bizeul_excess(s, A, B, Cq, lam, dlam, rmax, C0):
    r2 = A + 2.0 * B * s + Cq * s * s
    return math.sqrt(max(r2, 0.0)) + C0 * abs(lam + s * dlam) - rmax


@njit(cache=True)
def _chord_nb(kind, params, x, u, lo, hi):
    smin, smax = _box_chord(x, u, lo, hi)
    if kind == 1:
        R = params[0]
        b = 0.0
        c = -R * R
        for j in range(x.size):
            b += x[j] * u[j]
            c += x[j] * x[j]
        disc = math.sqrt(max(b * b - c, 0.0))
        smin = max(smin, -b - disc)
        smax = min(smax, -b + disc)
    elif kind == 2:
        n = x.size - 1
        C0 = params[1]
        A = 0.0
        B = 0.0
        Cq = 0.0
        for j in range(n):
            A += x[j] * x[j]
            B += x[j] * u[j]
            Cq += u[j] * u[j]
        lam, dlam = x[n], u[n]
        rmax = math.sqrt(params[0]) + C0
        if _bizeul_excess(smax, A, B, Cq, lam, dlam, rmax, C0) > 0.0:
            a, b = 0.0, smax
            for _ in range(N_BISECT):
                m = 0.5 * (a + b)
                if _bizeul_excess(m, A, B, Cq, lam, dlam, rmax, C0) > 0.0:
                    b = m
                else:
                    a = m
            smax = a
        if _bizeul_excess(smin, A, B, Cq, lam, dlam, rmax, C0) > 0.0:
            a, b = 0.0, smin
            for _ in range(N_BISECT):
                m = 0.5 * (a + b)
                if _bizeul_excess(m, A, B, Cq, lam, dlam, rmax, C0) > 0.0:
                    b = m
                else:
                    a = m
            smin = a
    return smin, smax


@njit(cache=True)
def _har_advance_nb(kind, params, lo, hi, x, rng, n_steps, t, record_start, thinning, out):
    d = x.size
    u = np.empty(d)
    sd = 1.0 / math.sqrt(2.0 * t) if t > 0.0 else 0.0
    for k in range(n_steps):
        nrm = 0.0
        for j in range(d):
            u[j] = rng.standard_normal()
            nrm += u[j] * u[j]
        v = rng.random()
        nrm = math.sqrt(nrm)
        for j in range(d):
            u[j] /= nrm
        smin, smax = _chord_nb(kind, params, x, u, lo, hi)
        if not (smin <= 0.0 <= smax) or not (math.isfinite(smin) and math.isfinite(smax)):
            return k
        if t > 0.0:
            m = 0.0
            for j in range(d):
                m -= x[j] * u[j]
            z = trunc_std_normal_scalar((smin - m) / sd, (smax - m) / sd, v)
            s = min(max(m + sd * z, smin), smax)
        else:
            s = smin + v * (smax - smin)
        for j in range(d):
            x[j] += s * u[j]
        kk = k - record_start + 1
        if kk > 0 and kk % thinning == 0:
            out[kk // thinning - 1] = x
    return -1


# ------------------------------------------------------------ numpy path


def _box_chord_np(X, U, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (lo - X) / U
        b = (hi - X) / U
    lo_s = np.where(U > 0, a, np.where(U < 0, b, -np.inf))
    hi_s = np.where(U > 0, b, np.where(U < 0, a, np.inf))
    return lo_s.max(axis=1), hi_s.min(axis=1)


def _bisect_np(excess, s_out):
    """Largest |s| in [0, s_out] with excess(s) <= 0, per chain; s_out is outside."""
    a = np.zeros_like(s_out)
    b = s_out.copy()
    for _ in range(N_BISECT):
        m = 0.5 * (a + b)
        bad = excess(m) > 0.0
        b = np.where(bad, m, b)
        a = np.where(bad, a, m)
    return a


def _chord_np(body, X, U):
    smin, smax = _box_chord_np(X, U, body.lo, body.hi)
    if body.kind == "ball":
        R = body.params[0]
        b = np.einsum("ij,ij->i", X, U)
        c = np.einsum("ij,ij->i", X, X) - R * R
        disc = np.sqrt(np.maximum(b * b - c, 0.0))
        smin = np.maximum(smin, -b - disc)
        smax = np.minimum(smax, -b + disc)
    elif body.kind == "bizeul":
        n, C0 = int(body.params[0]), body.params[1]
        xs, us = X[:, :n], U[:, :n]
        A = np.einsum("ij,ij->i", xs, xs)
        B = np.einsum("ij,ij->i", xs, us)
        Cq = np.einsum("ij,ij->i", us, us)
        lam, dlam = X[:, n], U[:, n]
        rmax = math.sqrt(n) + C0

        def excess(s):
            r2 = A + 2.0 * B * s + Cq * s * s
            return np.sqrt(np.maximum(r2, 0.0)) + C0 * np.abs(lam + s * dlam) - rmax

        out_hi = excess(smax) > 0.0
        out_lo = excess(smin) > 0.0
        smax = np.where(out_hi, _bisect_np(excess, smax), smax)
        smin = np.where(out_lo, _bisect_np(excess, smin), smin)
    elif body.kind == "generic":
        def excess(s):
            return np.where(body.contains(X + s[:, None] * U), -1.0, 1.0)

        smax = np.where(excess(smax) > 0, _bisect_np(excess, smax), smax)
        smin = np.where(excess(smin) > 0, _bisect_np(excess, smin), smin)
    return smin, smax


def _har_advance_np(body, X, rngs, n_steps, t, record_start, thinning, out):
    C, d = X.shape
    sd = 1.0 / math.sqrt(2.0 * t) if t > 0 else 0.0
    U = np.empty((C, d))
    v = np.empty(C)
    for k in range(n_steps):
        for c, rng in enumerate(rngs):
            U[c] = rng.standard_normal(d)
            v[c] = rng.random()
        U = U / np.sqrt(np.sum(U * U, axis=1))[:, None]
        smin, smax = _chord_np(body, X, U)
        bad = ~((smin <= 0.0) & (0.0 <= smax) & np.isfinite(smin) & np.isfinite(smax))
        if np.any(bad):
            return int(np.argmax(bad))
        if t > 0:
            m = -np.einsum("ij,ij->i", X, U)
            z = trunc_std_normal((smin - m) / sd, (smax - m) / sd, v)
            s = np.clip(m + sd * z, smin, smax)
        else:
            s = smin + v * (smax - smin)
        X += s[:, None] * U
        kk = k - record_start + 1
        if kk > 0 and kk % thinning == 0:
            out[:, kk // thinning - 1] = X
    return -1


def run_hit_and_run(body, X0, rngs, n_keep: int, burn_in: int, thinning: int, t: float = 0.0,
                    backend: str | None = None) -> np.ndarray:
    """Advance one chain per generator in ``rngs`` from the rows of ``X0``.

    Returns states of shape (C, n_keep, d): the first ``burn_in`` steps are
    discarded, then every ``thinning``-th state is kept.  ``X0`` is not
    modified.
    """
    backend = backend or default_backend()
    X = np.array(X0, dtype=float, order="C")
    if X.ndim != 2 or X.shape[1] != body.dim or X.shape[0] != len(rngs):
        raise SamplerError("starting states do not match the body dimension or chain count")
    thinning = max(1, int(thinning))
    C, d = X.shape
    out = np.empty((C, n_keep, d))
    n_steps = burn_in + n_keep * thinning
    if n_keep == 0 or C == 0:
        return out
    if backend == "numba" and body.kind in KIND_CODES:
        params = np.asarray(body.params, dtype=float)
        status = -1
        for c in range(C):
            st = _har_advance_nb(KIND_CODES[body.kind], params, body.lo, body.hi, X[c], rngs[c],
                                 n_steps, float(t), burn_in, thinning, out[c])
            if st >= 0:
                status = c
                break
    else:
        status = _har_advance_np(body, X, rngs, n_steps, float(t), burn_in, thinning, out)
    if status >= 0:
        raise SamplerError(
            f"line search failed on chain {status}: the chord through the current point is "
            "empty or unbounded (membership oracle inconsistent with the bounding box)")
    return out
