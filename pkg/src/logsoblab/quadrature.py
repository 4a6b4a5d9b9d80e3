"""Deterministic quadrature backends.

``Quadrature1D`` integrates against a one-dimensional log-concave density on
an adaptive uniform Simpson grid; it is the exact-moment oracle behind every
1D check.  ``ProductQuadrature`` handles measures of the form
``shift + Q z`` with ``z`` a product of 1D laws (Gaussians with any
covariance, cubes, products), for which every Gaussian-perturbed tilt
factorizes.  ``radial_engine`` gives the law of ``|X|`` for rotationally
invariant measures.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import InputError
from .measures import (Gaussian, Measure, OneDimGrid, Product, RadialProfile, SmoothPotential,
                       UniformBall, UniformCube)

DEFAULT_NODES = 4001
DEFAULT_DROP = 80.0
MAX_SHARED_NODES = 400_001


def simpson_weights(n: int, dx: float) -> np.ndarray:
    """Composite Simpson weights (odd ``n``); trapezoid weights for even ``n``."""
    if n < 2:
        raise InputError("need at least two nodes")
    if n % 2 == 0:
        w = np.full(n, dx)
        w[0] = w[-1] = 0.5 * dx
        return w
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * dx / 3.0


def _safe_eval(logpdf, x):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = np.asarray(logpdf(x), dtype=float)
    return np.where(np.isnan(v), -np.inf, v)


def _window(logpdf, lo, hi, drop):
    """Interval outside of which ``logpdf`` is below its maximum minus ``drop``."""
    a = lo if np.isfinite(lo) else min(-1.0, hi - 1.0)
    b = hi if np.isfinite(hi) else max(1.0, lo + 1.0)
    for _ in range(3):
        for _ in range(80):
            g = np.linspace(a, b, 2001)
            lp = _safe_eval(logpdf, g)
            top = lp.max()
            if not np.isfinite(top):
                if (np.isfinite(lo) or a < -1e12) and (np.isfinite(hi) or b > 1e12):
                    raise InputError("density is zero on the whole search window")
            grow = False
            width = b - a
            if not np.isfinite(lo) and (not np.isfinite(top) or lp[0] > top - drop):
                a -= width
                grow = True
            if not np.isfinite(hi) and (not np.isfinite(top) or lp[-1] > top - drop):
                b += width
                grow = True
            if not grow:
                break
        keep = np.nonzero(lp >= top - drop)[0]
        i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, g.size - 1)
        na, nb = g[i0], g[i1]
        if np.isfinite(lo) and i0 == 0:
            na = lo
        if np.isfinite(hi) and i1 == g.size - 1:
            nb = hi
        if (nb - na) > 0.5 * (b - a):
            return na, nb
        a, b = na, nb
    return a, b


class Quadrature1D:
    """Exact-moment engine for a 1D density ``exp(logpdf)`` supported in [lo, hi].

    The grid is rebuilt adaptively around the mass, so tilts that move or
    squeeze the density stay resolved.  Tabulated densities use their own
    nodes.
    """

    def __init__(self, logpdf: Callable, lo: float = -np.inf, hi: float = np.inf,
                 n: int = DEFAULT_NODES, drop: float = DEFAULT_DROP, nodes=None):
        self.logpdf = logpdf
        self.lo, self.hi = float(lo), float(hi)
        self.n, self.drop = n, drop
        if nodes is None:
            a, b = _window(logpdf, self.lo, self.hi, drop)
            nodes = np.linspace(a, b, n if n % 2 else n + 1)
        self.x = np.asarray(nodes, dtype=float)
        self._tabulated = nodes is not None and logpdf is None
        lp = _safe_eval(logpdf, self.x)
        self.log_pdf_nodes = lp
        dx = self.x[1] - self.x[0]
        logw = np.log(simpson_weights(self.x.size, dx)) + lp
        if not np.any(np.isfinite(logw)):
            raise InputError("density is not normalizable on the grid")
        self.log_norm = float(logsumexp(logw))
        self.w = np.exp(logw - self.log_norm)
        self.w /= self.w.sum()

    # -- constructors
    @classmethod
    def from_table(cls, x, density):
        x = np.asarray(x, dtype=float)
        p = np.asarray(density, dtype=float)
        with np.errstate(divide="ignore"):
            lp = np.log(p)
        eng = cls.__new__(cls)
        eng.logpdf = _table_logpdf(x, lp)
        eng.lo, eng.hi = float(x[0]), float(x[-1])
        eng.n, eng.drop = x.size, DEFAULT_DROP
        eng.x = x
        eng.log_pdf_nodes = lp
        logw = np.log(simpson_weights(x.size, x[1] - x[0])) + lp
        if not np.any(np.isfinite(logw)):
            raise InputError("density is not normalizable on the grid")
        eng.log_norm = float(logsumexp(logw))
        eng.w = np.exp(logw - eng.log_norm)
        eng.w /= eng.w.sum()
        eng._tabulated = True
        return eng

    @classmethod
    def from_spec(cls, spec: Measure, n: int = DEFAULT_NODES):
        return engine_1d(spec, n)

    # -- transforms
    def tilted(self, t: float = 0.0, h: float = 0.0) -> "Quadrature1D":
        """Law proportional to ``p(x) exp(-t x^2 + h x)``."""
        base = self.logpdf

        def lp(x):
            return base(x) - t * x * x + h * x

        if self._tabulated:
            eng = Quadrature1D.from_table(self.x, np.exp(self.log_pdf_nodes - t * self.x**2 + h * self.x
                                                         - np.max(self.log_pdf_nodes - t * self.x**2 + h * self.x)))
            eng.logpdf = lp
            return eng
        return Quadrature1D(lp, self.lo, self.hi, self.n, self.drop)

    def scaled(self, c: float, shift: float = 0.0) -> "Quadrature1D":
        """Law of ``c X + shift`` (c > 0)."""
        if not c > 0:
            raise InputError("scale must be positive")
        base = self.logpdf
        lo, hi = c * self.lo + shift, c * self.hi + shift
        if self._tabulated:
            eng = Quadrature1D.from_table(c * self.x + shift, np.exp(self.log_pdf_nodes - self.log_pdf_nodes.max()))
            return eng
        return Quadrature1D(lambda x: base((x - shift) / c), lo, hi, self.n, self.drop)

    def standardized(self) -> "Quadrature1D":
        """Unit variance, same mean."""
        m, s = self.mean, math.sqrt(self.var)
        return self.scaled(1.0 / s, m - m / s)

    def isotropic(self) -> "Quadrature1D":
        """Mean zero, unit variance."""
        m, s = self.mean, math.sqrt(self.var)
        return self.scaled(1.0 / s, -m / s)

    # -- integrals
    def expect(self, fn) -> float:
        return float(np.dot(self.w, fn(self.x)))

    @property
    def mean(self) -> float:
        return float(np.dot(self.w, self.x))

    @property
    def var(self) -> float:
        m = self.mean
        return float(np.dot(self.w, (self.x - m) ** 2))

    def moment(self, k: int, central: bool = False) -> float:
        c = self.mean if central else 0.0
        return float(np.dot(self.w, (self.x - c) ** k))

    def log_partition(self, t: float = 0.0, h: float = 0.0) -> float:
        """``log E exp(-t X^2 + h X)``.

        Both integrals use one common grid (the union of the base and the
        tilted windows at the finer spacing), so the result is exactly 0 at
        no tilt and convex in ``h``.
        """
        if t == 0 and h == 0:
            return 0.0
        if self._tabulated:
            x, lp = self.x, self.log_pdf_nodes
        else:
            tl = self.tilted(t, h)
            a, b = min(self.x[0], tl.x[0]), max(self.x[-1], tl.x[-1])
            dx = min(self.x[1] - self.x[0], tl.x[1] - tl.x[0])
            n = min(int(math.ceil((b - a) / dx)) + 1, MAX_SHARED_NODES)
            x = np.linspace(a, b, n if n % 2 else n + 1)
            lp = _safe_eval(self.logpdf, x)
        logw = np.log(simpson_weights(x.size, x[1] - x[0])) + lp
        return float(logsumexp(logw - t * x * x + h * x) - logsumexp(logw))

    def log_mgf(self, s: float) -> float:
        return self.log_partition(0.0, s)

    def pdf(self, v):
        return np.exp(_safe_eval(self.logpdf, np.asarray(v, dtype=float)) - self.log_norm)

    def _cdf_nodes(self):
        if not hasattr(self, "_cdf"):
            p = np.exp(self.log_pdf_nodes - np.max(self.log_pdf_nodes))
            c = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]))])
            self._cdf = c / c[-1]
        return self._cdf

    def cdf(self, v):
        return np.interp(v, self.x, self._cdf_nodes(), left=0.0, right=1.0)

    def ppf(self, q):
        c = self._cdf_nodes()
        keep = np.concatenate([[True], np.diff(c) > 0])
        return np.interp(q, c[keep], self.x[keep])

    def sample(self, N: int, rng) -> np.ndarray:
        return self.ppf(rng.random(N))

    def as_cloud_arrays(self):
        """Nodes and normalized weights, usable wherever a weighted sample is."""
        return self.x[:, None], self.w


def _table_logpdf(x, lp):
    def f(v):
        v = np.asarray(v, dtype=float)
        i = np.clip(np.searchsorted(x, v) - 1, 0, x.size - 2)
        frac = (v - x[i]) / (x[i + 1] - x[i])
        a, b = lp[i], lp[i + 1]
        with np.errstate(invalid="ignore"):
            out = np.where(frac <= 0, a, np.where(frac >= 1, b, a + frac * (b - a)))
        out = np.where(np.isfinite(a) & np.isfinite(b), out, np.where(frac == 0, a, -np.inf))
        return np.where((v >= x[0]) & (v <= x[-1]), out, -np.inf)

    return f


def engine_1d(spec: Measure, n: int = DEFAULT_NODES) -> Quadrature1D:
    """Quadrature engine for a one-dimensional measure spec."""
    if spec.dim != 1:
        raise InputError("engine_1d needs a one-dimensional measure")
    if isinstance(spec, Gaussian):
        m, v = float(spec.mean[0]), float(spec.cov[0, 0])
        return Quadrature1D(lambda x: -0.5 * (x - m) ** 2 / v, n=n)
    if isinstance(spec, UniformCube):
        a = spec.half_width
        return Quadrature1D(lambda x: np.where(np.abs(x) <= a, 0.0, -np.inf), -a, a, n,
                            nodes=np.linspace(-a, a, n))
    if isinstance(spec, UniformBall):
        R = spec.radius
        return Quadrature1D(lambda x: np.where(np.abs(x) <= R, 0.0, -np.inf), -R, R, n,
                            nodes=np.linspace(-R, R, n))
    if isinstance(spec, OneDimGrid):
        return Quadrature1D.from_table(spec.x, spec.density)
    if isinstance(spec, RadialProfile):
        rmax = spec.r[-1]
        return Quadrature1D(lambda x: spec.log_radial(np.abs(x)), -rmax, rmax, n)
    if isinstance(spec, SmoothPotential):
        return Quadrature1D(lambda x: -spec.potential(np.asarray(x, dtype=float)[:, None]), n=n)
    if isinstance(spec, Product):
        return engine_1d(spec.components[0], n)
    raise InputError(f"no 1D engine for {spec.family}")


def density_engine(logpdf: Callable, lo=-np.inf, hi=np.inf, n: int = DEFAULT_NODES) -> Quadrature1D:
    return Quadrature1D(logpdf, lo, hi, n)


# ------------------------------------------------------------- products


class ProductQuadrature:
    """Measures ``shift + Q z`` with independent 1D factors ``z_i``.

    Since ``|shift + Q z|^2 = |shift|^2 + 2 (Q^T shift).z + |z|^2``, the
    tilt ``exp(-t|x|^2 + h.x)`` factorizes over the ``z_i``, so every
    ``mu_{t,h}`` has exact moments.
    """

    def __init__(self, factors, Q=None, shift=None):
        self.factors = list(factors)
        d = len(self.factors)
        self.Q = np.eye(d) if Q is None else np.asarray(Q, dtype=float)
        self.shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
        self.dim = d
        self._cache: dict = {}

    @classmethod
    def from_spec(cls, spec: Measure, n: int = DEFAULT_NODES):
        if isinstance(spec, Gaussian):
            ev, Q = np.linalg.eigh(spec.cov)
            factors = [Quadrature1D(lambda x, v=v: -0.5 * x * x / v, n=n) for v in ev]
            return cls(factors, Q, spec.mean)
        if isinstance(spec, UniformCube):
            f = engine_1d(UniformCube(spec.half_width, 1), n)
            return cls([f] * spec.dim)
        if isinstance(spec, Product):
            return cls([engine_1d(c, n) for c in spec.components])
        if spec.dim == 1:
            return cls([engine_1d(spec, n)])
        raise InputError(f"{spec.family} does not factorize")

    def _factor(self, i, t, h):
        key = (i, float(t), float(h))
        if key not in self._cache:
            f = self.factors[i]
            self._cache[key] = f if (t == 0 and h == 0) else f.tilted(t, h)
        return self._cache[key]

    def _z_tilt(self, t, h):
        h = np.zeros(self.dim) if h is None else np.asarray(h, dtype=float)
        return self.Q.T @ h - 2.0 * t * (self.Q.T @ self.shift)

    def tilt_moments(self, t: float = 0.0, h=None):
        """Barycenter and covariance of ``mu_{t,h}``."""
        hz = self._z_tilt(t, h)
        engs = [self._factor(i, t, hz[i]) for i in range(self.dim)]
        mz = np.array([e.mean for e in engs])
        vz = np.array([e.var for e in engs])
        return self.shift + self.Q @ mz, (self.Q * vz) @ self.Q.T

    def log_laplace(self, h) -> float:
        """``log E exp(h.X)``."""
        h = np.asarray(h, dtype=float)
        hz = self.Q.T @ h
        return float(h @ self.shift + sum(f.log_mgf(hz[i]) for i, f in enumerate(self.factors)))

    def log_partition(self, t: float, h=None) -> float:
        """``log E exp(-t|X|^2 + h.X)``."""
        h = np.zeros(self.dim) if h is None else np.asarray(h, dtype=float)
        hz = self._z_tilt(t, h)
        s = self.shift
        return float(-t * s @ s + h @ s + sum(f.log_partition(t, hz[i]) for i, f in enumerate(self.factors)))

    def K_of_t(self, t: float) -> float:
        return math.exp(self.log_partition(2.0 * t) - 2.0 * self.log_partition(t))

    def second_moment(self, t: float = 0.0, h=None) -> float:
        m, c = self.tilt_moments(t, h)
        return float(m @ m + np.trace(c))

    def tilt_map(self, t: float, h0):
        """``F(h0) = h0 + 2 t * barycenter(tau_{h0} mu)``."""
        m, _ = self.tilt_moments(0.0, h0)
        return np.asarray(h0, dtype=float) + 2.0 * t * m


# ------------------------------------------------------------- radial law


def radial_log_profile(spec: Measure) -> tuple[Callable, float]:
    """(log lambda(r), r_max) for rotationally invariant families."""
    if isinstance(spec, Gaussian):
        c = spec.cov
        if not (np.allclose(c, c[0, 0] * np.eye(spec.dim)) and np.allclose(spec.mean, 0)):
            raise InputError("Gaussian is not rotationally invariant")
        v = c[0, 0]
        return (lambda r: -0.5 * r * r / v), np.inf
    if isinstance(spec, UniformBall):
        R = spec.radius
        return (lambda r: np.where(r <= R, 0.0, -np.inf)), R
    if isinstance(spec, RadialProfile):
        return spec.log_radial, float(spec.r[-1])
    if isinstance(spec, SmoothPotential) and spec.name in ("quartic", "quadratic"):
        d = spec.dim

        def lam(r):
            pts = np.zeros((np.size(r), d))
            pts[:, 0] = r
            return -spec.potential(pts)

        return lam, np.inf
    raise InputError(f"{spec.family} is not handled as rotationally invariant")


def radial_engine(spec: Measure, t: float = 0.0, n: int = DEFAULT_NODES) -> Quadrature1D:
    """Law of ``R = |X|`` under ``mu_{t,0}``: density ``r^{d-1} lambda(r) e^{-t r^2}``."""
    lam, rmax = radial_log_profile(spec)
    d = spec.dim

    def lp(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = (d - 1) * np.log(r) + lam(r) - t * r * r
        return np.where(r >= 0, out, -np.inf)

    return Quadrature1D(lp, 0.0, rmax, n)


def normalize_second_moment(spec: RadialProfile, target: float | None = None) -> RadialProfile:
    """Rescale a radial profile so that ``E|X|^2 = target`` (default: dim)."""
    target = spec.dim if target is None else target
    m2 = radial_engine(spec).moment(2)
    return spec.scaled(math.sqrt(target / m2))
