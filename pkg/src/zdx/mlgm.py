"""Mittag-Leffler and MLGM laws, their samplers, and the generalized CLT experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _mc
from .driver import Driver, lattice_terms, return_mass
from .excursion import _direct_tables
from .greenkubo import gk_extension
from .lattice import Observable, StableParams
from .rng import split_counts, stream
from .spectral import decompose, fit_stable_params, norm_A, phi0

D2_MAX_HORIZON = 512


class MlgmError(ValueError):
    pass


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise MlgmError(f"gamma must lie in [0, 1], got {gamma}")


def ml_moment(gamma: float, m: int) -> float:
    """E[Y^m] = m! Gamma(1+gamma)^m / Gamma(1+m gamma) for Y ~ ML(gamma)."""
    _check_gamma(gamma)
    if m < 0 or int(m) != m:
        raise MlgmError("m must be a nonnegative integer")
    return math.exp(math.lgamma(m + 1) + m * math.lgamma(1 + gamma) - math.lgamma(1 + m * gamma))


def mlgm_moment(gamma: float, m: int) -> float:
    """E[X^m] for X = sqrt(Y) Z: zero for odd m, m! Gamma(1+gamma)^(m/2) / (2^(m/2) Gamma(1 + m gamma / 2)) else."""
    _check_gamma(gamma)
    if m < 0 or int(m) != m:
        raise MlgmError("m must be a nonnegative integer")
    if m % 2:
        return 0.0
    h = m // 2
    return math.exp(math.lgamma(m + 1) + h * math.lgamma(1 + gamma) - h * math.log(2) - math.lgamma(1 + h * gamma))


@dataclass(frozen=True)
class MlgmLaw:
    gamma: float

    def __post_init__(self):
        _check_gamma(self.gamma)

    def moment(self, m: int) -> float:
        return mlgm_moment(self.gamma, m)

    def sample(self, rng: np.random.Generator, size=None):
        return sample_mlgm(self.gamma, rng, size)


def positive_stable(gamma: float, rng: np.random.Generator, size=None):
    """One-sided stable variate with E exp(-s S) = exp(-s^gamma), 0 < gamma < 1 (Chambers-Mallows-Stuck)."""
    if not 0.0 < gamma < 1.0:
        raise MlgmError("positive stable index must lie in (0, 1)")
    U = rng.uniform(0.0, math.pi, size)
    W = rng.standard_exponential(size)
    a = gamma
    return (np.sin(a * U) / np.sin(U) ** (1 / a)) * (np.sin((1 - a) * U) / W) ** ((1 - a) / a)


def sample_ml(gamma: float, rng: np.random.Generator, size=None):
    """Y ~ ML(gamma) as Gamma(1+gamma) S^(-gamma) with S positive gamma-stable; Exp(1) at 0, 1 at 1."""
    _check_gamma(gamma)
    if gamma == 0.0:
        return rng.standard_exponential(size)
    if gamma == 1.0:
        return np.ones(size) if size is not None else 1.0
    S = positive_stable(gamma, rng, size)
    return math.gamma(1 + gamma) * S ** (-gamma)


def sample_mlgm(gamma: float, rng: np.random.Generator, size=None):
    """X = sqrt(Y) Z with Y ~ ML(gamma) and Z standard normal, independent."""
    Y = sample_ml(gamma, rng, size)
    Z = rng.standard_normal(size)
    return np.sqrt(Y) * Z


def sampler_report(gamma: float, n: int, seed: int, moments: Sequence = (1, 2, 3, 4)) -> dict:
    g = stream(seed, "mlgm", gamma)
    x = sample_mlgm(gamma, g, n)
    out = {"gamma": gamma, "n": n, "moments": {}}
    for m in moments:
        v = x**m
        est = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(n))
        exact = mlgm_moment(gamma, m)
        out["moments"][m] = {"empirical": est, "se": se, "exact": exact,
                             "relative_error": (est - exact) / exact if exact else None}
    out["variance"] = float(x.var())
    return out


# generalized CLT

def _beta_grid(obs: Observable) -> tuple:
    W = max((max(abs(c) for c in p) for p in obs.points), default=0)
    grid = np.zeros((2 * W + 1, 2 * W + 1))
    for p, w in zip(obs.points, obs.weights):
        grid[p[0] + W, (p[1] if obs.d == 2 else 0) + W] = w
    return grid, W


def birkhoff_samples(driver: Driver, obs: Observable, n_list: Sequence, n_traj: int, seed: int,
                     workers: int = 1) -> np.ndarray:
    """Z_n = sum_{k=1}^n beta(S_k) for each n in ``n_list`` (common random numbers across n)."""
    cps = np.asarray(sorted(int(n) for n in n_list), dtype=np.int64)
    if cps[0] < 1:
        raise MlgmError("horizons must be positive")
    nxt, step, cum, table, bits = _direct_tables(driver)
    beta, W = _beta_grid(obs)
    start_cum = np.cumsum(driver.stationary)
    start_cum[-1] = 1.0
    parts = []
    for w, cnt in enumerate(split_counts(n_traj, workers)):
        g = stream(seed, "birkhoff", w)
        parts.append(_mc.birkhoff_sums(nxt, step, cum, table, bits, beta, W, driver.d, start_cum, cps, cnt, g))
    return np.concatenate(parts)


def exact_second_moment(driver: Driver, obs: Observable, n: int) -> float:
    """E[Z_n^2] = sum_{j,k<=n} sum_{a,b} beta(a) beta(b) mu(S_{min(j,k)} = a) mu(S_{|j-k|} = b - a).

    Exact for i.i.d. steps (the walk restarts at each time).  Lattice terms
    come from stencil propagation on supp(beta) and its difference set.
    """
    if driver.kind != "iid":
        raise MlgmError("the splitting formula is exact only for i.i.d. steps")
    if driver.d == 2 and n > D2_MAX_HORIZON:
        raise MlgmError(f"d=2 horizon limited to {D2_MAX_HORIZON}")
    if n < 1:
        raise MlgmError("n must be positive")
    if not obs.points:
        return 0.0
    diffs = obs.differences()
    pts = list(dict.fromkeys(list(obs.points) + diffs))
    terms, _ = lattice_terms(driver, pts, n)
    col = {p: i for i, p in enumerate(pts)}
    beta = obs.as_dict()
    diag = sum(beta[a] ** 2 * terms[1: n + 1, col[a]].sum() for a in obs.points)
    off = 0.0
    for a in obs.points:
        u = terms[1:n, col[a]]  # j = 1..n-1
        for b in obs.points:
            c = tuple(x - y for x, y in zip(b, a))
            V = np.cumsum(terms[1:n, col[c]])  # V[r-1] = sum_{m=1}^r
            off += beta[a] * beta[b] * float(np.dot(u, V[::-1]))
    return float(diag + 2 * off)


def limit_params(driver: Driver, grid_size: int = 16) -> StableParams:
    sd = decompose(driver, grid_size, fit=False)
    return fit_stable_params(sd)[0]


def clt_experiment(driver: Driver, obs: Observable, n_list: Sequence, n_traj: int, seed: int,
                   workers: int = 1, params: StableParams | None = None) -> dict:
    """Moments of Z_n / (sqrt(Phi(0)) A_n) along ``n_list`` against sigma_GK^m E[Y^m], Y ~ MLGM(gamma)."""
    params = params or limit_params(driver)
    gamma = params.gamma
    sigma2 = gk_extension(driver, obs).value
    p0 = phi0(params)
    n_list = sorted(int(n) for n in n_list)
    Z = birkhoff_samples(driver, obs, n_list, n_traj, seed, workers)
    rows = []
    for i, n in enumerate(n_list):
        norm = math.sqrt(p0) * norm_A(params, n)
        x = Z[:, i] / norm
        row = {"n": n, "normalizer": norm, "alt_normalizer": math.sqrt(return_mass(driver, n + 1) - 1.0)}
        for m in (1, 2, 3, 4):
            v = x**m
            target = sigma2 ** (m / 2) * mlgm_moment(gamma, m)
            row[f"m{m}"] = float(v.mean())
            row[f"m{m}_se"] = float(v.std(ddof=1) / math.sqrt(len(v)))
            row[f"m{m}_limit"] = target
            row[f"m{m}_ratio"] = float(v.mean() / target) if target else None
        rows.append(row)
    note = None
    if driver.d == 2:
        note = "d=2: moments only; the sqrt(log n) normalization makes distributional convergence unobservable here"
    return {"gamma": gamma, "sigma_gk2": sigma2, "phi0": p0, "n_traj": n_traj, "rows": rows, "note": note}


def normalization_ratio(driver: Driver, n: int, params: StableParams | None = None) -> float:
    """return_mass(n) / (Phi(0) A_n^2)."""
    params = params or limit_params(driver)
    return return_mass(driver, n) / (phi0(params) * norm_A(params, n) ** 2)


def second_moment_ratio(driver: Driver, obs: Observable, n: int, params: StableParams | None = None,
                        sigma2: float | None = None) -> float:
    """exact_second_moment / (Phi(0) A_n^2 sigma^2_GK)."""
    params = params or limit_params(driver)
    sigma2 = gk_extension(driver, obs).value if sigma2 is None else sigma2
    return exact_second_moment(driver, obs, n) / (phi0(params) * norm_A(params, n) ** 2 * sigma2)
