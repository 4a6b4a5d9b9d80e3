"""Log-concave measure families, tilts and convex bodies.

Every family exposes an unnormalized ``log_density`` (normalizing constants
are never computed; estimators self-normalize), a support test and a JSON
round trip.  ``log_density_unnormalized`` adds the Gaussian-perturbed linear
tilt ``-t|x|^2 + h.x``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InputError

SQRT3 = math.sqrt(3.0)


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {x.shape}")
    return pts, single


class Measure:
    """Base class; subclasses are immutable after construction."""

    family = "abstract"
    dim: int

    def log_density(self, x):
        raise NotImplementedError

    def grad_log_density(self, x):
        raise InputError(f"{self.family} has no gradient oracle")

    @property
    def has_gradient(self) -> bool:
        return False

    def contains(self, x):
        return np.isfinite(self.log_density(x))

    def center(self) -> np.ndarray:
        return np.zeros(self.dim)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


@dataclass(frozen=True, eq=False, repr=False)
class Gaussian(Measure):
    mean: np.ndarray
    cov: np.ndarray
    family = "gaussian"

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.size, m.size):
            raise InputError("covariance shape does not match mean")
        if not np.allclose(c, c.T):
            raise InputError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise InputError("covariance must be positive definite") from exc
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_prec", np.linalg.inv(c))

    @classmethod
    def standard(cls, dim: int, scale: float = 1.0):
        return cls(np.zeros(dim), scale**2 * np.eye(dim))

    @property
    def dim(self):
        return self.mean.size

    @property
    def has_gradient(self):
        return True

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        d = pts - self.mean
        val = -0.5 * np.einsum("ij,jk,ik->i", d, self._prec, d)
        return val[0] if single else val

    def grad_log_density(self, x):
        pts, single = _as_points(x, self.dim)
        g = -(pts - self.mean) @ self._prec
        return g[0] if single else g

    def center(self):
        return self.mean.copy()

    def to_dict(self):
        return {"family": self.family, "mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True, eq=False, repr=False)
class UniformCube(Measure):
    """Uniform on ``[-half_width, half_width]^dim``; half-width sqrt(3) is isotropic."""

    half_width: float
    dim: int
    family = "uniform_cube"

    def __post_init__(self):
        if not self.half_width > 0 or self.dim < 1:
            raise InputError("UniformCube needs half_width > 0 and dim >= 1")

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        inside = np.all(np.abs(pts) <= self.half_width, axis=1)
        val = np.where(inside, 0.0, -np.inf)
        return val[0] if single else val

    @property
    def body(self):
        return cube_body(self.half_width, self.dim)

    def to_dict(self):
        return {"family": self.family, "half_width": self.half_width, "dim": self.dim}


@dataclass(frozen=True, eq=False, repr=False)
class UniformBall(Measure):
    radius: float
    dim: int
    family = "uniform_ball"

    def __post_init__(self):
        if not self.radius > 0 or self.dim < 1:
            raise InputError("UniformBall needs radius > 0 and dim >= 1")

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        inside = np.einsum("ij,ij->i", pts, pts) <= self.radius**2
        val = np.where(inside, 0.0, -np.inf)
        return val[0] if single else val

    @property
    def body(self):
        return ball_body(self.radius, self.dim)

    def to_dict(self):
        return {"family": self.family, "radius": self.radius, "dim": self.dim}


@dataclass(frozen=True, eq=False, repr=False)
class RadialProfile(Measure):
    """Density ``lambda(|x|)`` with ``log lambda`` tabulated on ``r``.

    ``log lambda`` is linearly interpolated and must be concave and
    nonincreasing; the measure vanishes beyond ``r[-1]``.
    """

    r: np.ndarray
    log_profile: np.ndarray
    dim: int
    family = "radial_profile"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        lp = np.asarray(self.log_profile, dtype=float)
        if r.ndim != 1 or r.shape != lp.shape or r.size < 3:
            raise InputError("radial table needs matching 1D arrays of length >= 3")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise InputError("radial grid must start at 0 and increase")
        finite = np.isfinite(lp)
        if not finite[0]:
            raise InputError("log-profile must be finite at r = 0")
        lpf = lp[finite]
        scale = max(1.0, float(np.max(np.abs(lpf))))
        if np.any(np.diff(lpf) > 1e-12 * scale):
            raise InputError("log-profile must be nonincreasing")
        rf = r[finite]
        slopes = np.diff(lpf) / np.diff(rf)
        if np.any(np.diff(slopes) > 1e-8 * max(1.0, float(np.max(np.abs(slopes))))):
            raise InputError("log-profile must be concave")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "log_profile", lp)

    @classmethod
    def from_function(cls, fn: Callable, r_max: float, dim: int, n: int = 4001):
        r = np.linspace(0.0, r_max, n)
        return cls(r, np.asarray(fn(r), dtype=float), dim)

    def scaled(self, c: float) -> "RadialProfile":
        """Law of ``c X``."""
        return RadialProfile(self.r * c, self.log_profile, self.dim)

    def log_radial(self, rad):
        rad = np.asarray(rad, dtype=float)
        out = np.interp(rad, self.r, self.log_profile) - self.log_profile[0]
        return np.where(rad <= self.r[-1], out, -np.inf)

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        val = self.log_radial(np.sqrt(np.einsum("ij,ij->i", pts, pts)))
        return val[0] if single else val

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "r": self.r.tolist(),
                "log_profile": [float(v) if np.isfinite(v) else None for v in self.log_profile]}


@dataclass(frozen=True, eq=False, repr=False)
class OneDimGrid(Measure):
    """1D density tabulated on a uniform grid (log-linearly interpolated)."""

    x: np.ndarray
    density: np.ndarray
    family = "one_dim_grid"
    dim = 1

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != p.shape or x.size < 3:
            raise InputError("grid needs matching 1D arrays of length >= 3")
        dx = np.diff(x)
        if np.any(dx <= 0) or not np.allclose(dx, dx[0], rtol=1e-6):
            raise InputError("grid must be uniform and increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InputError("density must be finite and nonnegative")
        mass = np.trapezoid(p, x)
        if not mass > 0:
            raise InputError("density is not normalizable")
        if abs(mass - 1.0) > 1e-3:
            raise InputError(f"density integrates to {mass:.6g}, expected 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "density", p)

    def log_density(self, x):
        pts, single = _as_points(x, 1)
        with np.errstate(divide="ignore"):
            lp = np.log(self.density)
        v = pts[:, 0]
        val = np.interp(v, self.x, lp)
        val = np.where((v >= self.x[0]) & (v <= self.x[-1]), val, -np.inf)
        return val[0] if single else val

    def to_dict(self):
        return {"family": self.family, "x": self.x.tolist(), "density": self.density.tolist()}


@dataclass(frozen=True, eq=False, repr=False)
class Product(Measure):
    """Product of one-dimensional measures."""

    components: tuple
    family = "product"

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps or any(c.dim != 1 for c in comps):
            raise InputError("Product needs a nonempty list of 1D measures")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return len(self.components)

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        val = sum(c.log_density(pts[:, [i]]) for i, c in enumerate(self.components))
        return val[0] if single else val

    @property
    def has_gradient(self):
        return all(c.has_gradient for c in self.components)

    def grad_log_density(self, x):
        pts, single = _as_points(x, self.dim)
        g = np.column_stack([c.grad_log_density(pts[:, [i]])[:, 0]
                             for i, c in enumerate(self.components)])
        return g[0] if single else g

    def center(self):
        return np.array([c.center()[0] for c in self.components])

    def to_dict(self):
        return {"family": self.family, "components": [c.to_dict() for c in self.components]}


def _quartic(x):
    r2 = np.einsum("ij,ij->i", x, x)
    return 0.25 * r2**2 + 0.5 * r2


def _quartic_grad(x):
    r2 = np.einsum("ij,ij->i", x, x)
    return (r2 + 1.0)[:, None] * x


def _quadratic(x, scale=1.0):
    return 0.5 * np.einsum("ij,ij->i", x, x) / scale**2


def _quadratic_grad(x, scale=1.0):
    return x / scale**2


def _logcosh(x):
    return np.sum(np.logaddexp(x, -x) - math.log(2.0), axis=1)


def _logcosh_grad(x):
    return np.tanh(x)


POTENTIALS = {
    "quartic": (_quartic, _quartic_grad),
    "quadratic": (_quadratic, _quadratic_grad),
    "logcosh": (_logcosh, _logcosh_grad),
}


@dataclass(frozen=True, eq=False, repr=False)
class SmoothPotential(Measure):
    """``dmu = exp(-V) dx`` for a convex ``V`` with gradient oracle.

    ``V`` and ``grad`` act row-wise on (N, dim) arrays.  Only named
    potentials (see ``POTENTIALS``) survive serialization.
    """

    potential: Callable
    grad: Callable
    dim: int
    name: str = "custom"
    params: dict = field(default_factory=dict)
    family = "smooth_potential"

    @classmethod
    def named(cls, name: str, dim: int, **params):
        if name not in POTENTIALS:
            raise InputError(f"unknown potential {name!r}")
        V, G = POTENTIALS[name]
        return cls(lambda x: V(x, **params), lambda x: G(x, **params), dim, name, dict(params))

    @property
    def has_gradient(self):
        return True

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        val = -np.asarray(self.potential(pts), dtype=float)
        return val[0] if single else val

    def grad_log_density(self, x):
        pts, single = _as_points(x, self.dim)
        g = -np.asarray(self.grad(pts), dtype=float)
        return g[0] if single else g

    def to_dict(self):
        if self.name not in POTENTIALS:
            raise InputError("custom potentials cannot be serialized")
        return {"family": self.family, "name": self.name, "dim": self.dim, "params": self.params}


@dataclass(frozen=True, eq=False, repr=False)
class BizeulBody(Measure):
    """Uniform measure on the tightness body in R^{n+1} (see ``make_bizeul_body``)."""

    n: int
    C0: float = 8.0
    family = "bizeul_body"

    def __post_init__(self):
        if self.n < 1 or not self.C0 > 0:
            raise InputError("BizeulBody needs n >= 1 and C0 > 0")

    @property
    def dim(self):
        return self.n + 1

    @property
    def body(self):
        return make_bizeul_body(self.n, self.C0)

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        val = np.where(self.body.contains(pts), 0.0, -np.inf)
        return val[0] if single else val

    def to_dict(self):
        return {"family": self.family, "n": self.n, "C0": self.C0}


MeasureSpec = Measure


# ---------------------------------------------------------------- tilts


@dataclass(frozen=True, eq=False)
class TiltParams:
    """Index ``(t, h)`` of ``mu_{t,h} ∝ mu * exp(-t|x|^2 + h.x)``."""

    t: float = 0.0
    h: np.ndarray | None = None

    def __post_init__(self):
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise InputError("tilt t must be finite and >= 0")
        if self.h is not None:
            h = np.atleast_1d(np.asarray(self.h, dtype=float))
            if not np.all(np.isfinite(h)):
                raise InputError("tilt h must be finite")
            object.__setattr__(self, "h", h)

    def h_vec(self, dim: int) -> np.ndarray:
        if self.h is None:
            return np.zeros(dim)
        if self.h.size != dim:
            raise InputError(f"tilt h has length {self.h.size}, expected {dim}")
        return self.h

    @property
    def is_identity(self):
        return self.t == 0 and (self.h is None or not np.any(self.h))


def tilt_log_factor(x, tilt: TiltParams):
    """``-t|x|^2 + h.x`` row-wise."""
    x = np.atleast_2d(x)
    h = tilt.h_vec(x.shape[1])
    return -tilt.t * np.einsum("ij,ij->i", x, x) + x @ h


def log_density_unnormalized(spec: Measure, tilt: TiltParams | None, x):
    """``log f(x) - t|x|^2 + h.x`` up to an additive constant; -inf off support."""
    tilt = tilt or TiltParams()
    pts, single = _as_points(x, spec.dim)
    base = np.atleast_1d(spec.log_density(pts))
    with np.errstate(invalid="ignore"):
        val = np.where(np.isfinite(base), base + tilt_log_factor(pts, tilt), -np.inf)
    return val[0] if single else val


# --------------------------------------------------------------- bodies


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """Membership oracle plus an axis-aligned bounding box and interior point.

    ``kind`` in {"cube", "ball", "bizeul"} enables analytic chords in the
    compiled hit-and-run kernels; "generic" bodies use ``membership``.
    """

    kind: str
    dim: int
    lo: np.ndarray
    hi: np.ndarray
    interior: np.ndarray
    params: tuple = ()
    membership: Callable | None = None

    def contains(self, x, tol: float = 0.0):
        pts, single = _as_points(x, self.dim)
        if self.kind == "cube":
            ok = np.max(np.abs(pts), axis=1) <= self.params[0] + tol
        elif self.kind == "ball":
            ok = np.sqrt(np.einsum("ij,ij->i", pts, pts)) <= self.params[0] + tol
        elif self.kind == "bizeul":
            n, C0 = int(self.params[0]), self.params[1]
            xs, lam = pts[:, :n], pts[:, n]
            ok = (np.max(np.abs(xs), axis=1) <= SQRT3 + tol) & (
                np.sqrt(np.einsum("ij,ij->i", xs, xs))
                <= math.sqrt(n) + C0 * (1.0 - np.abs(lam)) + tol
            )
        else:
            ok = np.asarray(self.membership(pts), dtype=bool)
        return bool(ok[0]) if single else ok


def cube_body(half_width: float, dim: int) -> ConvexBody:
    a = float(half_width)
    return ConvexBody("cube", dim, -a * np.ones(dim), a * np.ones(dim), np.zeros(dim), (a,))


def ball_body(radius: float, dim: int) -> ConvexBody:
    R = float(radius)
    return ConvexBody("ball", dim, -R * np.ones(dim), R * np.ones(dim), np.zeros(dim), (R,))


def make_bizeul_body(n: int, C0: float = 8.0) -> ConvexBody:
    """Body ``K = sqrt3 B_inf^n x R  ∩ {(x, lam): |x| <= sqrt(n) + C0 (1 - |lam|)}``.

    Lives in R^{n+1}; the last coordinate is ``lam``.
    """
    if n < 1 or not C0 > 0:
        raise InputError("need n >= 1 and C0 > 0")
    lam_max = 1.0 + math.sqrt(n) / C0
    lo = np.concatenate([-SQRT3 * np.ones(n), [-lam_max]])
    hi = np.concatenate([SQRT3 * np.ones(n), [lam_max]])
    return ConvexBody("bizeul", n + 1, lo, hi, np.zeros(n + 1), (float(n), float(C0)))


def generic_body(membership: Callable, lo, hi, interior) -> ConvexBody:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    interior = np.asarray(interior, float)
    body = ConvexBody("generic", lo.size, lo, hi, interior, (), membership)
    if not body.contains(interior):
        raise InputError("interior point fails the membership oracle")
    return body


def body_of(spec: Measure) -> ConvexBody:
    if isinstance(spec, (UniformCube, UniformBall, BizeulBody)):
        return spec.body
    raise InputError(f"{spec.family} is not a uniform measure on a convex body")


# ------------------------------------------------- tightness-body slices


def _bizeul_params(body) -> tuple[int, float]:
    if isinstance(body, BizeulBody):
        return body.n, body.C0
    if isinstance(body, ConvexBody) and body.kind == "bizeul":
        return int(body.params[0]), body.params[1]
    raise InputError("expected the tightness body")


def _restricted_gaussian_norms(n, t, n_mc, rng, chunk=1 << 22):
    """|x| for x ~ exp(-t|x|^2) restricted to sqrt3 B_inf^n (exact, by inverse CDF)."""
    out = np.empty(n_mc)
    rows = max(1, chunk // n)
    if t > 0:
        s = 1.0 / math.sqrt(2.0 * t)
        p_lo, p_hi = ndtr(-SQRT3 / s), ndtr(SQRT3 / s)
    for start in range(0, n_mc, rows):
        stop = min(n_mc, start + rows)
        u = rng.random((stop - start, n))
        if t > 0:
            x = s * ndtri(p_lo + u * (p_hi - p_lo))
        else:
            x = SQRT3 * (2.0 * u - 1.0)
        out[start:stop] = np.sqrt(np.einsum("ij,ij->i", x, x))
    return out


@dataclass
class SliceDensity:
    lam: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    t: float
    n_mc: int
    seed: int


def slice_density_lastcoord(body, t: float, lam_grid, n_mc: int = 20_000, seed: int = 0,
                            norms=None) -> SliceDensity:
    """Unnormalized density of the last coordinate of ``nu_t ∝ e^{-t|(x,lam)|^2} Unif(K)``.

    ``f_t(lam) = e^{-t lam^2} * P(|x| <= sqrt(n) + C0 (1 - |lam|))`` with ``x``
    drawn exactly from the Gaussian-restricted cube.  All grid points share
    one sample (common random numbers), so the curve is smooth in ``lam``.
    Empty slices give 0.
    """
    from .sampling import make_rng

    n, C0 = _bizeul_params(body)
    if t < 0:
        raise InputError("t must be >= 0")
    lam = np.asarray(lam_grid, dtype=float)
    if norms is None:
        norms = _restricted_gaussian_norms(n, t, n_mc, make_rng(seed, 17))
    r = np.sort(norms)
    radius = math.sqrt(n) + C0 * (1.0 - np.abs(lam))
    p = np.where(radius >= 0, np.searchsorted(r, radius, side="right") / r.size, 0.0)
    g = np.exp(-t * lam**2)
    return SliceDensity(lam, g * p, g * np.sqrt(p * (1 - p) / r.size), t, r.size, seed)


def lastcoord_variance(body, t: float, n_mc: int = 200_000, seed: int = 0,
                       n_grid: int = 4001, n_batches: int = 10) -> tuple[float, float]:
    """``Var_{nu_t}(lam)`` by quadrature of the slice density; stderr from batches."""
    from .sampling import make_rng

    n, C0 = _bizeul_params(body)
    lam = np.linspace(0.0, 1.0 + math.sqrt(n) / C0, n_grid)
    norms = _restricted_gaussian_norms(n, t, n_mc, make_rng(seed, 17))

    def var_of(nr):
        f = slice_density_lastcoord(body, t, lam, norms=nr).density
        return float(np.trapezoid(lam**2 * f, lam) / np.trapezoid(f, lam))

    batches = [var_of(b) for b in np.array_split(norms, n_batches)]
    return var_of(norms), float(np.std(batches, ddof=1) / math.sqrt(n_batches))


def slice_volume_ratio(body, lam1: float, lam0: float = 0.0, n_mc: int = 200_000,
                       seed: int = 0) -> tuple[float, float]:
    """``Vol(K_lam1) / Vol(K_lam0)`` by rejection from the cube; (value, stderr)."""
    from .sampling import make_rng

    n, C0 = _bizeul_params(body)
    r = _restricted_gaussian_norms(n, 0.0, n_mc, make_rng(seed, 23))
    i1 = r <= math.sqrt(n) + C0 * (1.0 - abs(lam1))
    i0 = r <= math.sqrt(n) + C0 * (1.0 - abs(lam0))
    p1, p0 = i1.mean(), i0.mean()
    if p0 == 0:
        raise InputError("reference slice is empty")
    ratio = p1 / p0
    infl = (i1 - ratio * i0) / p0
    return float(ratio), float(np.std(infl) / math.sqrt(n_mc))


# -------------------------------------------------------- serialization

_FAMILIES = {
    "gaussian": lambda d: Gaussian(np.asarray(d["mean"]), np.asarray(d["cov"])),
    "uniform_cube": lambda d: UniformCube(float(d["half_width"]), int(d["dim"])),
    "uniform_ball": lambda d: UniformBall(float(d["radius"]), int(d["dim"])),
    "bizeul_body": lambda d: BizeulBody(int(d["n"]), float(d.get("C0", 8.0))),
    "product": lambda d: Product(tuple(spec_from_dict(c) for c in d["components"])),
    "smooth_potential": lambda d: SmoothPotential.named(d["name"], int(d["dim"]), **d.get("params", {})),
}


def spec_from_dict(d: dict, base_dir: Path | None = None) -> Measure:
    fam = d.get("family")
    if fam == "one_dim_grid":
        if "grid_csv" in d:
            x, p = read_grid_csv(Path(base_dir or ".") / d["grid_csv"])
        else:
            x, p = d["x"], d["density"]
        return OneDimGrid(np.asarray(x), np.asarray(p))
    if fam == "radial_profile":
        if "grid_csv" in d:
            r, lp = read_grid_csv(Path(base_dir or ".") / d["grid_csv"])
        else:
            r = d["r"]
            lp = [-np.inf if v is None else v for v in d["log_profile"]]
        return RadialProfile(np.asarray(r), np.asarray(lp, dtype=float), int(d["dim"]))
    if fam not in _FAMILIES:
        raise InputError(f"unknown measure family {fam!r}")
    return _FAMILIES[fam](d)


def save_spec(spec: Measure, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True))


def load_spec(path) -> Measure:
    path = Path(path)
    return spec_from_dict(json.loads(path.read_text()), path.parent)


def write_grid_csv(path, x: Sequence[float], y: Sequence[float], header=("coordinate", "value")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for a, b in zip(x, y):
            w.writerow([repr(float(a)), repr(float(b))])


def read_grid_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:] if rows and not _is_number(rows[0][0]) else rows
    arr = np.array([[float(a), float(b)] for a, b in body])
    return arr[:, 0], arr[:, 1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
