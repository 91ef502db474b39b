"""Green-Kubo variances of fiber observables: exact on the extension, Monte Carlo on the zero fiber."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .driver import Driver, MarkovDriver, OccupationStream, default_box_radius
from .excursion import reduced_chain, sample_excursions
from .kernel import MIN_DECAY_EXPONENT, block_tail_fit
from .lattice import Observable, as_point, make_fp
from .rng import split_counts

GK_START_LEVEL = {1: 12, 2: 9}
GK_MAX_LEVEL = {1: 20, 2: 14}
DEFAULT_K_MAX = 64


class GreenKuboError(ValueError):
    pass


@dataclass
class GkResult:
    value: float
    per_k_terms: np.ndarray
    truncation_bound: float
    cesaro: bool
    converged: bool = True
    ci: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, max_terms: int = 256) -> dict:
        return {
            "sigma_gk2": self.value,
            "truncation_bound": self.truncation_bound,
            "ci": self.ci,
            "cesaro": self.cesaro,
            "converged": self.converged,
            "per_k_terms": [float(x) for x in self.per_k_terms[:max_terms]],
            "diagnostics": self.diagnostics,
        }


def _check_zero_sum(obs: Observable) -> None:
    if not obs.points:
        return
    if len(obs.points) == 1:
        raise GreenKuboError("a single-point observable cannot have zero sum")
    if abs(obs.total) > 1e-12 * max(1.0, max(abs(w) for w in obs.weights)):
        raise GreenKuboError(f"observable weights must sum to zero (sum={obs.total:g})")


def decay_exponent(terms: np.ndarray, k_lo: int, k_hi: int) -> float:
    """Least-squares slope of log|c_k| against log k over the decade [k_lo, k_hi]."""
    k = np.arange(k_lo, k_hi + 1)
    c = np.abs(terms[k_lo: k_hi + 1])
    ok = c > 0
    if ok.sum() < 2:
        return -math.inf
    return float(np.polyfit(np.log(k[ok]), np.log(c[ok]), 1)[0])


def gk_extension(driver: Driver, obs: Observable, tol: float = 1e-6, max_level: int | None = None) -> GkResult:
    """sum_a beta(a)^2 + 2 sum_{k>=1} sum_{a,b} beta(a) beta(b) mu(S_k = a - b).

    Inner sums are exact (stencil propagation of the occupation law on the
    difference set of the support).  The series is summed to K = 2^J and the
    tail beyond K is fitted with the Gaussian-regime expansion
    c_k = k^(-(d+2)/2) (c0 + c1/k + c2/k^2); the truncation bound is the change
    of the tail-corrected value between consecutive dyadic levels.
    """
    _check_zero_sum(obs)
    d = driver.d
    if not obs.points:
        return GkResult(0.0, np.zeros(1), 0.0, False)
    diffs = obs.differences()
    beta = obs.as_dict()
    coef = np.zeros(len(diffs))
    for a in obs.points:
        for b in obs.points:
            coef[diffs.index(tuple(x - y for x, y in zip(a, b)))] += beta[a] * beta[b]
    cap = GK_MAX_LEVEL[d] if max_level is None else max_level
    start = min(GK_START_LEVEL[d], cap)
    R = default_box_radius(driver, 2**cap)
    st = OccupationStream(driver, R)
    terms = [float(st.values(diffs) @ coef)]
    beta0 = (d + 2) / 2
    level = start
    while True:
        while st.k < 2**level:
            st.advance()
            terms.append(float(st.values(diffs) @ coef))
        c = np.asarray(terms)
        partial = np.concatenate([[0.0], np.cumsum(c[1:])])
        # sum over k in [1, 2^j) sits at index 2^j - 1
        dyadic = np.array([partial[2**j - 1] for j in range(level + 1)])
        prev = None
        for J in range(5, level + 1):
            tail, _ = block_tail_fit(dyadic, J, beta0)
            est = c[0] + 2 * (dyadic[J] + tail)
            if prev is not None:
                err = max(abs(est - prev), 1e-14 * max(1.0, abs(est)) * 2 ** (J / 2))
                slope = decay_exponent(c, max(1, 2**J // 10), 2**J - 1)
                out = (est, err, J, tail, slope)
                if J >= start and err <= tol and slope < -MIN_DECAY_EXPONENT:
                    return _gk_result(c[: 2**J], out, True, st.escaped)
            prev = est
        if level >= cap:
            return _gk_result(c, out, False, st.escaped)
        level += 1


def _gk_result(c: np.ndarray, out: tuple, ok: bool, escaped: float) -> GkResult:
    est, err, J, tail, slope = out
    return GkResult(float(est), c, float(err), False, converged=ok,
                    diagnostics={"horizon": 2**J, "tail": 2 * tail, "decay_exponent": slope, "escaped_mass": escaped})


def gk_fp_identity(driver: Driver, p, tol: float = 1e-6) -> dict:
    """sigma^2_GK(f_p) next to 2 g(p) - 2 from the series route."""
    from .kernel import g_series

    p = as_point(p, driver.d)
    gk = gk_extension(driver, make_fp(p), tol)
    g = g_series(driver, p)
    rhs = 2 * g.value - 2
    tolerance = gk.truncation_bound + 2 * g.error_bound
    return {"p": list(p), "gk_extension": gk.value, "two_g_minus_two": rhs, "difference": gk.value - rhs,
            "tolerance": tolerance, "holds": bool(abs(gk.value - rhs) <= max(tolerance, 1e-9))}


# induced observable on the zero fiber

def obm_standard_error(y: np.ndarray, batch: int | None = None) -> float:
    """Overlapping batch means standard error of the mean of a stationary sequence."""
    n = len(y)
    b = batch or max(int(round(n ** 0.5)), 1)
    if n < 2 * b:
        return float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    cs = np.concatenate([[0.0], np.cumsum(y - y.mean())])
    bm = (cs[b:] - cs[:-b]) / b
    var_b = np.sum(bm**2) * b / ((n - b + 1) * (1 - b / n))
    return float(math.sqrt(var_b / n))


def cesaro_terms(f: np.ndarray, k_max: int) -> np.ndarray:
    """y_i = f_i^2 + 2 sum_{k<K} (K-k)/K f_i f_{i+k}: their mean is the Cesaro mean of the partial sums."""
    n = len(f) - k_max + 1
    y = f[:n] ** 2
    for k in range(1, k_max):
        y = y + 2 * (k_max - k) / k_max * f[:n] * f[k: k + n]
    return y


def excursions_for_steps(driver: Driver, obs: Observable, n_steps: int) -> int:
    """Number of excursions whose expected total reduced-chain length is ``n_steps``."""
    ch = reduced_chain(driver, obs.points)
    w, v = np.linalg.eig(ch.T.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    pi = pi / pi.sum()
    return int(math.ceil(n_steps * pi[ch.node_site == 0].sum()))


def gk_induced(driver: Driver, obs: Observable, n_excursions: int, k_max: int = DEFAULT_K_MAX, seed: int = 0,
               workers: int = 1, n_steps: int | None = None) -> GkResult:
    """Cesaro Green-Kubo variance of f_{0} = sum over an excursion of beta(S_k), along consecutive excursions.

    Each worker runs one long chain of consecutive excursions (the induced
    map is stationary but not independent for Markov drivers).  The Cesaro
    mean of the first ``k_max`` partial sums of lag covariances is estimated
    by the average of y_i (see :func:`cesaro_terms`); the error bar ``ci`` is
    the overlapping-batch-means standard error, combined over workers.
    ``n_steps`` overrides ``n_excursions`` with the count whose expected
    length is that many reduced-chain steps.
    """
    if k_max < 1:
        raise GreenKuboError("k_max must be at least 1")
    _check_zero_sum(obs)
    if not obs.points:
        return GkResult(0.0, np.zeros(k_max), 0.0, True)
    if n_steps is not None:
        n_excursions = excursions_for_steps(driver, obs, n_steps)
    means, ses, lens, lag_sums = [], [], [], []
    for w, cnt in enumerate(split_counts(n_excursions, workers)):
        batch = sample_excursions(driver, obs.points, cnt, seed, ("gk_induced", w), chained=True)
        if batch.censored.any():
            raise GreenKuboError("censored excursions in the induced chain")
        f = batch.induced(obs)
        y = cesaro_terms(f, k_max)
        means.append(float(y.mean()))
        ses.append(obm_standard_error(y))
        lens.append(len(y))
        n = len(f) - k_max
        lag_sums.append(np.array([float(np.dot(f[:n], f[k: k + n])) / n for k in range(k_max + 1)]))
    wts = np.asarray(lens, float) / sum(lens)
    value = float(np.dot(wts, means))
    ci = float(math.sqrt(np.sum((wts * np.asarray(ses)) ** 2)))
    cov = np.sum([wt * ls for wt, ls in zip(wts, lag_sums)], axis=0)
    plain = float(cov[0] + 2 * cov[1:k_max].sum())
    return GkResult(value, cov, ci, True, ci=ci, diagnostics={
        "plain_partial_sum": plain,
        "lag_k_max_cov": float(cov[k_max]),
        "n_excursions": int(n_excursions),
        "k_max": k_max,
    })


def induction_check(driver: Driver, obs: Observable, n_excursions: int | None = None, n_steps: int | None = None,
                    seed: int = 0, k_max: int = DEFAULT_K_MAX, workers: int = 1) -> dict:
    ext = gk_extension(driver, obs)
    ind = gk_induced(driver, obs, n_excursions or 0, k_max, seed, workers, n_steps=n_steps)
    diff = ind.value - ext.value
    bound = 3 * ind.ci + ext.truncation_bound
    return {"gk_extension": ext.value, "gk_induced": ind.value, "ci": ind.ci, "difference": diff,
            "holds": bool(abs(diff) <= bound), "bound": bound,
            "n_excursions": ind.diagnostics["n_excursions"]}


def coboundary_surrogate(driver: Driver, base=(1,), direction=(2,)) -> tuple:
    """Minimise sigma^2_GK(f_base + t f_direction) over t.

    Returns (observable, sigma^2_GK, t).  For fiber observables the variance
    is a positive-definite form on zero-sum weights, so the minimum is
    positive; it is the smallest variance reachable along this line.
    """
    f1 = make_fp(base)
    f2 = make_fp(direction)
    s11 = gk_extension(driver, f1).value
    s22 = gk_extension(driver, f2).value
    s_sum = gk_extension(driver, _combine(f1, f2, 1.0)).value
    cross = (s_sum - s11 - s22) / 2
    t = -cross / s22
    obs = _combine(f1, f2, t)
    return obs, gk_extension(driver, obs).value, t


def _combine(a: Observable, b: Observable, t: float) -> Observable:
    m = dict(a.as_dict())
    for p, w in b.as_dict().items():
        m[p] = m.get(p, 0.0) + t * w
    return Observable(a.d, tuple(m), tuple(m.values()))


# exact subset invariance for cyclic chains

def block_classes(driver: MarkovDriver, period: int) -> list:
    """Cyclic classes C_0, ..., C_{M-1} (C_0 contains state 0); raises if P is not M-cyclic."""
    P = driver.transition
    S = P.shape[0]
    cls = -np.ones(S, dtype=int)
    cls[0] = 0
    stack = [0]
    while stack:
        s = stack.pop()
        for t in np.flatnonzero(P[s] > 0):
            c = (cls[s] + 1) % period
            if cls[t] < 0:
                cls[t] = c
                stack.append(t)
            elif cls[t] != c:
                raise GreenKuboError(f"return time to the block is not constant = {period}")
    if (cls < 0).any():
        raise GreenKuboError("chain is not irreducible")
    return [np.flatnonzero(cls == j) for j in range(period)]


def _fundamental(P: np.ndarray, mu: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    return np.linalg.inv(np.eye(n) - P + np.outer(np.ones(n), mu))


def gk_state_chain(P: np.ndarray, mu: np.ndarray, h: np.ndarray) -> float:
    """Cesaro sum <h,h> + 2 sum_k <h, P^k h> (mu-weighted) for mu-centred h, via Z = (I - P + 1 mu)^-1."""
    Zh = _fundamental(P, mu) @ h
    return float(2 * np.dot(mu * h, Zh) - np.dot(mu * h, h))


def gk_subset_invariance(driver: MarkovDriver, block_period: int, obs_on_states, block: int = 0) -> dict:
    """Cesaro Green-Kubo of a state observable h on the full chain and of its induced version on a block.

    The block B is a cyclic class, so the return time to B is the constant
    M = ``block_period``.  Induced observable: f_B = h(X_0) + ... + h(X_{M-1}).
    Both sides are evaluated exactly with fundamental matrices; the measure on
    B is mu restricted to B (total mass 1/M).
    """
    if driver.kind != "markov":
        raise GreenKuboError("subset invariance needs a Markov driver")
    classes = block_classes(driver, block_period)
    P = driver.transition
    mu = driver.stationary
    h = np.asarray(obs_on_states, dtype=float)
    if h.shape != mu.shape:
        raise GreenKuboError(f"observable needs one value per state ({len(mu)})")
    h = h - np.dot(mu, h)
    full = gk_state_chain(P, mu, h)
    B = classes[block]
    S = len(mu)
    # forward moments of the partial sum f_k = h(X_0) + ... + h(X_{k-1}), started at each x in B
    m0 = np.zeros((len(B), S))
    m0[np.arange(len(B)), B] = 1.0
    m1 = np.zeros_like(m0)
    m2 = np.zeros_like(m0)
    for _ in range(block_period):
        m2 = (m2 + 2 * m1 * h + m0 * h**2) @ P
        m1 = (m1 + m0 * h) @ P
        m0 = m0 @ P
    Q = m0[:, B]
    G1 = m1[:, B]
    mB = mu[B]
    w = G1.sum(axis=1)
    ell = mB @ G1
    second = float(mB @ m2[:, B].sum(axis=1))
    muQ = mB / mB.sum()
    ZQ = _fundamental(Q, muQ)
    induced = second + 2 * float(ell @ (ZQ @ w - np.dot(muQ, w)))
    return {"full": full, "induced": induced, "difference": induced - full, "period": block_period,
            "block": [int(s) for s in B]}
