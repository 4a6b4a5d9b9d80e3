"""Weighted statistics shared by every estimator.

All clouds carry self-normalized weights, so standard errors use the
delta-method variance of a self-normalized importance sampling (SNIS)
mean, ``sum_i w_i^2 (phi_i - phi_bar)^2``.  For equal weights this reduces
to the usual ``var / N``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import InputError


def normalize_log_weights(logw):
    logw = np.asarray(logw, dtype=float)
    if logw.size == 0:
        return np.zeros(0)
    top = np.max(logw)
    if not np.isfinite(top):
        raise InputError("all weights are zero or non-finite")
    w = np.exp(logw - logsumexp(logw))
    return w / w.sum()


def n_eff(w) -> float:
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return 0.0
    return float(1.0 / np.sum(w * w))


def wmean(x, w):
    return np.tensordot(w, x, axes=(0, 0))


def wcov(x, w, mean=None):
    if mean is None:
        mean = wmean(x, w)
    xc = x - mean
    return (xc * w[:, None]).T @ xc


def snis_stderr(phi, w) -> float:
    """Delta-method standard error of ``sum_i w_i phi_i``."""
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        return 0.0
    dev = phi - np.dot(w, phi)
    return float(np.sqrt(np.sum((w * dev) ** 2)))


def snis_stderr_rows(phi, w):
    """Column-wise :func:`snis_stderr` for ``phi`` of shape (N, k)."""
    dev = phi - w @ phi
    return np.sqrt(np.sum((w[:, None] * dev) ** 2, axis=0))


def wquantile(v, w, q):
    """Weighted quantile; for equal weights and q=1/2 this is ``np.median``."""
    v = np.asarray(v, dtype=float)
    order = np.argsort(v, kind="stable")
    vs, ws = v[order], np.asarray(w, dtype=float)[order]
    cw = np.cumsum(ws)
    cw /= cw[-1]
    idx = int(np.searchsorted(cw, q - 1e-12))
    if idx + 1 < len(vs) and abs(cw[idx] - q) <= 1e-12:
        return 0.5 * (vs[idx] + vs[idx + 1])
    return float(vs[min(idx, len(vs) - 1)])


def opnorm(sym, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic start vector (a fixed non-symmetric pattern, so it is not
    an eigenvector of the common exchangeable matrices); stops when the
    Rayleigh quotient changes by less than ``tol`` relatively.
    """
    S = np.atleast_2d(np.asarray(sym, dtype=float))
    d = S.shape[0]
    if d == 1:
        return float(max(S[0, 0], 0.0))
    v = 1.0 + 0.5 * np.sin(np.sqrt(2.0) * np.arange(1, d + 1))
    v /= np.linalg.norm(v)
    lam = float(v @ S @ v)
    for _ in range(max_iter):
        w = S @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ S @ v)
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return max(lam, 0.0)
