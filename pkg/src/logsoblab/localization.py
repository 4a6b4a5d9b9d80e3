"""Stochastic localization on a fixed particle cloud.

The measure at time ``t`` is the base cloud reweighted by
``exp(-t|x|^2 + h_t.x)``.  For ``t -> int phi dmu_t`` to be a martingale the
driving process must be

    dh_t = 2 a_t dt + sqrt(2) dB_t,

with ``a_t`` the barycenter of ``mu_t`` (this is the usual
``exp(-s|x|^2/2 + c_s.x)``, ``dc = a ds + dB_s`` process in the time
``s = 2t``).  In this clock a Gaussian base ``N(0, I)`` has covariance
``I / (1 + 2t)`` at time ``t``, ``mu_t`` is ``2t``-strongly log-concave
relative to the base, and quadratic variations pick up a factor 2:
``d[M]_t = 2 |int phi (x - a_t) dmu_t|^2 dt``.

Two discretizations are offered: Euler-Maruyama (``scheme="euler"``) and
the exact "planted" representation ``h_t = 2t X + sqrt(2) W_t`` with ``X``
drawn from the base cloud (``scheme="planted"``), which has no time-step
bias on the empirical base measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InputError
from .psi import DirectionNet, TestFunction, _log_g2, default_u_grid, sigma_tilde_values
from .sampling import DEFAULT_NEFF_FLOOR, Estimate, WeightedCloud, make_rng
from .stats import opnorm


@dataclass
class LocalizationPath:
    """One realization: times, noise increments, h trajectory and per-step summaries."""

    times: np.ndarray
    noise: np.ndarray
    h: np.ndarray
    a: np.ndarray
    A: np.ndarray
    n_eff: np.ndarray
    seed: int
    index: int
    truncated_at: int | None
    M: dict = field(default_factory=dict)
    base: WeightedCloud | None = None

    def weights(self, k: int) -> np.ndarray:
        return _path_weights(self.base, self.times[k], self.h[k][None, :])[0]


def _path_weights(cloud, t, H):
    """Normalized weights (P, N) of the base cloud tilted by ``(t, H[p])``."""
    X = cloud.points
    r2 = np.einsum("ij,ij->i", X, X)
    with np.errstate(divide="ignore"):
        lw0 = np.log(cloud.weights)
    L = lw0[None, :] - t * r2[None, :] + H @ X.T
    L -= logsumexp(L, axis=1)[:, None]
    W = np.exp(L)
    return W / W.sum(axis=1)[:, None]


@dataclass
class Ensemble:
    cloud: WeightedCloud
    times: np.ndarray
    h: np.ndarray          # (P, K+1, d)
    noise: np.ndarray      # (P, K, d) standard normals of the steps
    a: np.ndarray          # (P, K+1, d)
    A: np.ndarray          # (P, K+1, d, d)
    A_op: np.ndarray       # (P, K+1)
    n_eff: np.ndarray      # (P, K+1)
    alive: np.ndarray      # (P, K+1) bool
    M: dict                # name -> (P, K+1)
    seed: int
    dt: float
    scheme: str
    floor: float

    @property
    def n_paths(self):
        return self.h.shape[0]

    @property
    def n_steps(self):
        return self.times.size - 1

    def weights(self, k: int, paths=None) -> np.ndarray:
        H = self.h[:, k] if paths is None else self.h[paths, k]
        return _path_weights(self.cloud, self.times[k], H)

    def path(self, p: int) -> LocalizationPath:
        dead = np.nonzero(~self.alive[p])[0]
        return LocalizationPath(self.times, self.noise[p], self.h[p], self.a[p], self.A[p],
                                self.n_eff[p], self.seed, p, int(dead[0]) if dead.size else None,
                                {k: v[p] for k, v in self.M.items()}, self.cloud)

    def truncated_paths(self) -> list:
        return [p for p in range(self.n_paths) if not self.alive[p, -1]]

    def summary_rows(self, names=()):
        """Per-time rows (t, mean opnorm A_t, min n_eff, ensemble means of tracked M)."""
        rows = []
        for k, t in enumerate(self.times):
            row = {"t": float(t), "A_op_mean": float(np.mean(self.A_op[:, k])),
                   "n_eff_min": float(np.min(self.n_eff[:, k]))}
            for nm in names:
                row[f"M[{nm}]"] = float(np.mean(self.M[nm][:, k]))
            rows.append(row)
        return rows


def simulate_ensemble(cloud: WeightedCloud, T: float = 1.0, dt: float = 0.02, n_paths: int = 200,
                      seed: int = 0, track: dict | None = None, scheme: str = "euler",
                      floor: float = DEFAULT_NEFF_FLOOR, noise_substeps: int = 1,
                      min_base_neff: float = 1000.0) -> Ensemble:
    """Simulate ``n_paths`` independent localization paths on ``cloud``.

    ``track`` maps names to per-particle values ``phi(x_i)``; their
    martingales ``M_t = sum_i w_i(t) phi(x_i)`` are recorded.  Path ``p``
    draws its noise from stream ``(seed, 31, p)``; with
    ``noise_substeps = m`` each step's increment is the normalized sum of
    ``m`` finer increments, so a run at ``dt`` and one at ``dt/m`` share
    the Brownian path.  Paths whose effective sample size drops below
    ``floor`` are marked dead from that step on (not fatal).
    """
    if scheme not in ("euler", "planted"):
        raise InputError(f"unknown scheme {scheme!r}")
    X, w0 = cloud.points, cloud.weights
    N, d = X.shape
    if cloud.n_eff < min_base_neff * (1.0 - 1e-9):
        raise InputError(f"base cloud has n_eff {cloud.n_eff:.0f} < {min_base_neff:g}")
    A0 = opnorm(cloud.cov)
    if dt > 0.1 / max(1.0, A0) * (1 + 1e-12):
        raise InputError(f"dt = {dt} exceeds 0.1 / max(1, ||A_0||) = {0.1 / max(1.0, A0):.4g}")
    K = int(round(T / dt))
    if K < 1 or abs(K * dt - T) > 1e-9 * max(1.0, T):
        raise InputError("T must be a positive multiple of dt")
    times = dt * np.arange(K + 1)
    m = int(noise_substeps)
    noise = np.empty((n_paths, K, d))
    for p in range(n_paths):
        z = make_rng(seed, 31, p).standard_normal((K * m, d))
        noise[p] = z.reshape(K, m, d).sum(axis=1) / math.sqrt(m)
    planted = None
    if scheme == "planted":
        planted = np.array([X[make_rng(seed, 37, p).choice(N, p=w0)] for p in range(n_paths)])
        W = np.concatenate([np.zeros((n_paths, 1, d)), np.cumsum(math.sqrt(dt) * noise, axis=1)], axis=1)
    track = dict(track or {})
    r2 = np.einsum("ij,ij->i", X, X)
    XX = np.einsum("ij,ik->ijk", X, X).reshape(N, d * d)
    with np.errstate(divide="ignore"):
        lw0 = np.log(w0)
    h = np.zeros((n_paths, K + 1, d))
    a = np.empty((n_paths, K + 1, d))
    A = np.empty((n_paths, K + 1, d, d))
    A_op = np.empty((n_paths, K + 1))
    ne = np.empty((n_paths, K + 1))
    alive = np.ones((n_paths, K + 1), dtype=bool)
    M = {k: np.empty((n_paths, K + 1)) for k in track}
    phis = {k: np.asarray(v, dtype=float) for k, v in track.items()}
    for k in range(K + 1):
        t = times[k]
        L = lw0[None, :] - t * r2[None, :] + h[:, k] @ X.T
        L -= logsumexp(L, axis=1)[:, None]
        Wt = np.exp(L)
        Wt /= Wt.sum(axis=1)[:, None]
        ne[:, k] = 1.0 / np.sum(Wt * Wt, axis=1)
        a[:, k] = Wt @ X
        C = (Wt @ XX).reshape(n_paths, d, d) - np.einsum("pi,pj->pij", a[:, k], a[:, k])
        A[:, k] = C
        A_op[:, k] = np.linalg.eigvalsh(C)[:, -1]
        for name, phi in phis.items():
            M[name][:, k] = Wt @ phi
        if k > 0:
            alive[:, k] = alive[:, k - 1] & (ne[:, k] >= floor)
        else:
            alive[:, 0] = ne[:, 0] >= floor
        if k == K:
            break
        if scheme == "euler":
            h[:, k + 1] = h[:, k] + 2.0 * a[:, k] * dt + math.sqrt(2.0 * dt) * noise[:, k]
        else:
            h[:, k + 1] = 2.0 * times[k + 1] * planted + math.sqrt(2.0) * W[:, k + 1]
    return Ensemble(cloud, times, h, noise, a, A, A_op, ne, alive, M, seed, dt, scheme, floor)


def simulate_path(cloud: WeightedCloud, T: float, dt: float, seed: int, index: int = 0, **kw) -> LocalizationPath:
    """A single path (stream ``index`` of ``seed``)."""
    ens = simulate_ensemble(cloud, T, dt, n_paths=index + 1, seed=seed, **kw)
    return ens.path(index)


# ----------------------------------------------------------- checks


@dataclass
class MartingaleReport:
    name: str
    times: np.ndarray
    drift: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    max_abs_z: float
    passed: bool
    path_sd: np.ndarray
    n_paths: int


def martingale_check(ens: Ensemble, name: str, z_max: float = 4.0) -> MartingaleReport:
    """Ensemble mean of ``M_t - M_0`` with z-scores; PASS iff ``max |z| <= z_max``."""
    if ens.n_paths < 100:
        raise InputError("martingale check needs at least 100 paths")
    Mv = ens.M[name]
    D = Mv - Mv[:, [0]]
    drift = D.mean(axis=0)
    sd = D.std(axis=0, ddof=1)
    se = sd / math.sqrt(ens.n_paths)
    scale = np.maximum(np.abs(Mv).max(), 1e-300)
    z = np.where(se > 1e-14 * scale, drift / np.where(se > 0, se, 1.0), 0.0)
    mz = float(np.max(np.abs(z)))
    return MartingaleReport(name, ens.times, drift, se, z, mz, mz <= z_max,
                            Mv.std(axis=0, ddof=1), ens.n_paths)


def _ent_g2(W, lg2):
    """Row-wise Ent(g^2), E g^2 and E g^2 log g^2 for weight rows W."""
    g2 = np.exp(lg2)
    m = W @ g2
    with np.errstate(divide="ignore", invalid="ignore"):
        glg = np.where(g2 > 0, g2 * lg2, 0.0)
    e = W @ glg
    return e - m * np.log(m), m, e


@dataclass
class EntropyDecompositionReport:
    lhs: float
    lhs_se: float
    ent_T: float
    ent_T_se: float
    mart: float
    mart_se: float
    residual: float
    residual_se: float
    z: float
    passed: bool


def entropy_decomposition_check(ens: Ensemble, g: TestFunction, k: int | None = None,
                                z_max: float = 4.0) -> EntropyDecompositionReport:
    """Compare ``Ent_mu(g^2)`` with ``E Ent_{mu_T}(g^2) + E[M_T log M_T] - M_0 log M_0``.

    ``T`` is the time of step ``k`` (default last).  The residual's standard
    error is the path-to-path spread of the right-hand side.
    """
    k = ens.n_steps if k is None else k
    X = ens.cloud.points
    w0 = ens.cloud.weights
    lg2 = _log_g2(g, X)
    ent0, m0, _ = _ent_g2(w0[None, :], lg2)
    ent0, m0 = float(ent0[0]), float(m0[0])
    g2 = np.exp(lg2)
    with np.errstate(divide="ignore", invalid="ignore"):
        infl = np.where(g2 > 0, g2 * lg2, 0.0) - (math.log(m0) + 1.0) * g2 if m0 > 0 else g2 * 0
    lhs_se = float(np.sqrt(np.sum((w0 * (infl - w0 @ infl)) ** 2)))
    W = ens.weights(k)
    entT, mT, _ = _ent_g2(W, lg2)
    with np.errstate(divide="ignore", invalid="ignore"):
        mlogm = np.where(mT > 0, mT * np.log(mT), 0.0)
    mart_p = mlogm - (m0 * math.log(m0) if m0 > 0 else 0.0)
    P = ens.n_paths
    rhs_p = entT + mart_p
    res = float(rhs_p.mean() - ent0)
    res_se = float(rhs_p.std(ddof=1) / math.sqrt(P))
    scale = max(abs(ent0), float(np.abs(rhs_p).max()), 1e-300)
    z = res / res_se if res_se > 1e-14 * scale else 0.0
    return EntropyDecompositionReport(ent0, lhs_se, float(entT.mean()), float(entT.std(ddof=1) / math.sqrt(P)),
                                      float(mart_p.mean()), float(mart_p.std(ddof=1) / math.sqrt(P)),
                                      res, res_se, float(z), abs(z) <= z_max)


def sigma_tilde_path(ens: Ensemble, p: int, steps=None, net: DirectionNet | None = None,
                     u_grid=None, floor: float | None = None) -> list:
    """MGF sub-gaussian constant of ``mu_{t_k}`` along path ``p`` (list of Estimates).

    Steps below the effective-sample-size floor carry ``params['degenerate']``.
    """
    net = net or DirectionNet.build(ens.cloud.dim, size=64)
    steps = range(ens.n_steps + 1) if steps is None else steps
    floor = ens.floor if floor is None else floor
    out = []
    for k in steps:
        w = ens.weights(k, [p])[0]
        sc = math.sqrt(max(ens.A_op[p, k], 1e-300))
        ug = default_u_grid(sc) if u_grid is None else u_grid
        vals, ses = sigma_tilde_values(ens.cloud.points, w, net.vectors, ug)
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        ne = float(ens.n_eff[p, k])
        out.append(Estimate(float(vals[i, j]), float(ses[i, j]), ne, ens.seed, "sigma_tilde",
                            {"t": float(ens.times[k]), "path": p, "u": float(ug[j]),
                             "degenerate": ne < floor}))
    return out


@dataclass
class CapReport:
    rows: list
    passed: bool
    max_z: float


def sigma_tilde_cap_check(ens: Ensemble, paths, t_min: float = 0.1, t_max: float = 1.0,
                          net: DirectionNet | None = None, n_sigma: float = 4.0) -> CapReport:
    """``sigma-tilde_t <= 1/sqrt(2t) + n_sigma * stderr`` for ``t`` in [t_min, t_max]."""
    steps = [k for k, t in enumerate(ens.times) if t_min - 1e-12 <= t <= t_max + 1e-12]
    rows, ok, mz = [], True, -math.inf
    for p in paths:
        for e in sigma_tilde_path(ens, p, steps, net):
            t = e.params["t"]
            cap = 1.0 / math.sqrt(2.0 * t)
            good = e.value <= cap + n_sigma * e.stderr
            z = (e.value - cap) / e.stderr if e.stderr > 0 else (math.inf if e.value > cap else -math.inf)
            mz = max(mz, z)
            ok &= good
            rows.append({"path": p, "t": t, "sigma_tilde": e.value, "stderr": e.stderr, "cap": cap,
                         "n_eff": e.n_eff, "ok": bool(good)})
    return CapReport(rows, bool(ok), float(mz))


@dataclass
class LSIFromTiltReport:
    rows: list
    passed: bool
    M_hat: float
    pathwise: dict | None = None


def lsi_from_strong_tilt_check(cloud: WeightedCloud, M_hat: float, dictionary, n_sigma: float = 4.0,
                               ens: Ensemble | None = None, path_functions=(), n_paths_sigma: int = 40,
                               ) -> LSIFromTiltReport:
    """``Ent_mu(g^2) <= 8 M^2 int |grad g|^2 + n_sigma * stderr`` for every dictionary g.

    With an ensemble, also compares per path
    ``sum_k (dM_k)^2 / (2 M_k)`` (squared increments) with
    ``sum_k 2 sigma-tilde^2 Ent_{mu_{t_k}}(g^2) dt`` for each function in
    ``path_functions`` over the first ``n_paths_sigma`` paths.
    """
    from .psi import dirichlet_energy, entropy_functional

    rows, ok = [], True
    for g in dictionary:
        e = entropy_functional(cloud, g)
        en = dirichlet_energy(cloud, g)
        bound = 8.0 * M_hat**2 * en.value
        se = math.hypot(e.stderr, 8.0 * M_hat**2 * en.stderr)
        good = e.value <= bound + n_sigma * se
        ok &= good
        rows.append({"g": g.name, "entropy": e.value, "energy": en.value, "bound": bound,
                     "stderr": se, "ok": bool(good)})
    pathwise = None
    if ens is not None and path_functions:
        pathwise = {}
        P = min(n_paths_sigma, ens.n_paths)
        X = ens.cloud.points
        for g in path_functions:
            lg2 = _log_g2(g, X)
            lhs = np.zeros(P)
            rhs = np.zeros(P)
            prev = None
            for k in range(ens.n_steps + 1):
                W = ens.weights(k, np.arange(P))
                ent, m, _ = _ent_g2(W, lg2)
                if prev is not None:
                    lhs += (m - prev[1]) ** 2 / (2.0 * prev[1])
                if k < ens.n_steps:
                    # sigma-tilde along the direction of int g^2 (x - a) dmu_t only: this
                    # is the direction the variational bound uses, and restricting the
                    # sup lowers the right-hand side, so the check stays conservative.
                    g2 = np.exp(lg2)
                    V = np.einsum("pn,nd->pd", W * g2[None, :], X) - m[:, None] * ens.a[:P, k]
                    s2 = np.empty(P)
                    for p in range(P):
                        nv = np.linalg.norm(V[p])
                        th = V[p] / nv if nv > 0 else np.eye(cloud.dim)[0]
                        sc = math.sqrt(max(ens.A_op[p, k], 1e-300))
                        vals, _ = sigma_tilde_values(X, W[p], np.vstack([th, -th]), default_u_grid(sc))
                        s2[p] = np.max(vals) ** 2
                    rhs += 2.0 * s2 * np.maximum(ent, 0.0) * ens.dt
                prev = (ent, m)
            D = lhs - rhs
            se = float(D.std(ddof=1) / math.sqrt(P))
            good = D.mean() <= n_sigma * se
            pathwise[g.name] = {"lhs": float(lhs.mean()), "rhs": float(rhs.mean()), "diff_se": se,
                                "ok": bool(good)}
            ok &= good
    return LSIFromTiltReport(rows, bool(ok), M_hat, pathwise)


@dataclass
class VarianceDecompositionReport:
    var: float
    var_se: float
    poincare_term: float
    qv_increments: float
    qv_increments_se: float
    qv_rate: float
    rhs: float
    holds: bool
    rate_bound_ok: bool


def variance_decomposition_check(ens: Ensemble, phi: TestFunction, n_sigma: float = 4.0) -> VarianceDecompositionReport:
    """``Var_mu(phi) <= (1/(2T)) int |grad phi|^2 + E[N]_T`` with ``N_t = int phi dmu_t``.

    ``[N]_T`` is estimated by summed squared increments and, independently,
    by integrating the exact rate ``2 |int phi (x - a_t) dmu_t|^2``.  The
    Cauchy-Schwarz bound ``rate <= 2 ||A_t||_op Var_{mu_t}(phi)`` is checked
    at every step and path.
    """
    X, w0 = ens.cloud.points, ens.cloud.weights
    v = phi.f(X)
    m = w0 @ v
    var = float(w0 @ (v - m) ** 2)
    var_se = float(np.sqrt(np.sum((w0 * ((v - m) ** 2 - var)) ** 2)))
    G = phi.grad(X)
    energy = float(w0 @ np.einsum("ij,ij->i", G, G))
    T = ens.times[-1]
    qv_inc = np.zeros(ens.n_paths)
    qv_rate = np.zeros(ens.n_paths)
    rate_ok = True
    prev = None
    for k in range(ens.n_steps + 1):
        W = ens.weights(k)
        N = W @ v
        if prev is not None:
            qv_inc += (N - prev) ** 2
        if k < ens.n_steps:
            cvec = np.einsum("pn,nd->pd", W * v[None, :], X) - N[:, None] * ens.a[:, k]
            rate = 2.0 * np.einsum("pd,pd->p", cvec, cvec)
            vt = W @ v**2 - N**2
            rate_ok &= bool(np.all(rate <= 2.0 * ens.A_op[:, k] * vt * (1 + 1e-9) + 1e-15))
            qv_rate += rate * ens.dt
        prev = N
    qv = float(qv_inc.mean())
    qv_se = float(qv_inc.std(ddof=1) / math.sqrt(ens.n_paths))
    rhs = energy / (2.0 * T) + qv
    holds = var <= rhs + n_sigma * math.hypot(var_se, qv_se)
    return VarianceDecompositionReport(var, var_se, energy / (2.0 * T), qv, qv_se, float(qv_rate.mean()),
                                       rhs, bool(holds), rate_ok)
