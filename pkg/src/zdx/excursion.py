"""Excursions from the zero fiber: local times, hitting probabilities and their laws.

Three sampling engines produce excursions with identical statistics on the
tracked sites:

``direct``
    the lattice walk itself, run until it returns to 0 (with a step cap);
    the only engine that also records excursion lengths.
``window``
    for skip-free d=1 drivers: the walk on a window containing the tracked
    sites; a walk leaving the window above must come back through its top
    cell by a -1 step (and symmetrically below), so the excursion outside is
    replaced by that re-entry, which is exact.
``trace``
    for symmetric i.i.d. walks in d=1,2: the walk observed only on the
    tracked set A.  Its transition law is Q = I + C, where column y of C
    holds the charges c of the bounded function h_y = k + sum_z c_z a(. - z)
    equal to 1{y} on A, a = g/2 being the potential kernel.

Conditioned excursions (N_p > 0) are drawn from the Doob h-transform of a
reduced chain with h(x) = P_x(hit p before 0); the constant importance weight
h(0) = 1/alpha(p) is recorded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats

from . import _mc
from .driver import Driver, IidStep
from .kernel import g_fourier_many
from .lattice import Observable, as_point, origin
from .rng import split_counts, stream

DEFAULT_CAP = 10**9
CENSOR_FLAG_RATE = 1e-3


class ExcursionError(ValueError):
    pass


@dataclass
class ExcursionRecord:
    length: int | None
    visits: dict
    induced_sums: list
    censored: bool = False
    end_state: int = 0


@dataclass
class ExcursionBatch:
    """Many excursions: visit counts on ``sites`` (sites[0] is the origin)."""

    sites: list
    visits: np.ndarray
    lengths: np.ndarray | None
    censored: np.ndarray
    engine: str
    weight: float = 1.0

    @property
    def n(self) -> int:
        return self.visits.shape[0]

    @property
    def censored_rate(self) -> float:
        return float(self.censored.mean()) if self.n else 0.0

    def valid(self) -> "ExcursionBatch":
        keep = ~self.censored
        return ExcursionBatch(self.sites, self.visits[keep], None if self.lengths is None else self.lengths[keep],
                              self.censored[keep], self.engine, self.weight)

    def counts(self, p) -> np.ndarray:
        return self.visits[:, self.sites.index(as_point(p))]

    def induced(self, obs: Observable) -> np.ndarray:
        """f_{0} = sum_p beta(p) N_p for each excursion."""
        w = np.zeros(len(self.sites))
        for p, b in zip(obs.points, obs.weights):
            w[self.sites.index(p)] = b
        return self.visits @ w


# reduced chains

@dataclass
class ReducedChain:
    kind: str
    sites: list
    T: np.ndarray
    node_site: np.ndarray
    start_nodes: np.ndarray
    start_probs: np.ndarray
    weight: float = 1.0
    info: dict = field(default_factory=dict)

    def arrays(self):
        """Sparse-row sampling arrays (succ, cum) for the kernel."""
        n = self.T.shape[0]
        nnz = [np.flatnonzero(self.T[i] > 0) for i in range(n)]
        K = max(len(r) for r in nnz)
        succ = np.zeros((n, K), dtype=np.int64)
        cum = np.ones((n, K))
        for i, cols in enumerate(nnz):
            if len(cols) == 0:
                succ[i] = i
                continue
            c = np.cumsum(self.T[i, cols])
            c /= c[-1]
            succ[i, : len(cols)] = cols
            succ[i, len(cols):] = cols[-1]
            cum[i, : len(cols)] = c
            cum[i, len(cols) - 1:] = 1.0
        return succ, cum


def is_skip_free(driver: Driver) -> bool:
    if driver.d != 1 or driver.max_step != 1:
        return False
    if driver.kind == "iid":
        return True
    F = driver.step[:, 0]
    return int(np.sum(F == 1)) == 1 and int(np.sum(F == -1)) == 1


def window_chain(driver: Driver, sites: Sequence) -> ReducedChain:
    """Exact reduced chain on the window [min sites, max sites] x states (skip-free d=1)."""
    if not is_skip_free(driver):
        raise ExcursionError("window chain needs a skip-free d=1 driver with unique +1 and -1 states")
    sites = _site_list(sites, 1)
    lo = min(s[0] for s in sites)
    hi = max(s[0] for s in sites)
    width = hi - lo + 1
    if driver.kind == "iid":
        S = 1
        moves = [[(0, int(p[0]), w) for p, w in zip(driver.points, driver.probs)]]
        up_state = down_state = 0
        mu = np.ones(1)
    else:
        S = driver.n_states
        F = driver.step[:, 0]
        moves = [[(t, int(F[t]), driver.transition[s, t]) for t in range(S) if driver.transition[s, t] > 0]
                 for s in range(S)]
        up_state = int(np.flatnonzero(F == 1)[0])
        down_state = int(np.flatnonzero(F == -1)[0])
        mu = driver.stationary
    n = width * S
    T = np.zeros((n, n))
    node = lambda x, s: (x - lo) * S + s  # noqa: E731
    for x in range(lo, hi + 1):
        for s in range(S):
            for t, f, w in moves[s]:
                y = x + f
                if y > hi:
                    y, t = hi, down_state
                elif y < lo:
                    y, t = lo, up_state
                T[node(x, s), node(y, t)] += w
    node_site = np.full(n, -1, dtype=np.int64)
    for i, p in enumerate(sites):
        for s in range(S):
            node_site[node(p[0], s)] = i
    start = np.array([node(0, s) for s in range(S)])
    return ReducedChain("window", sites, T, node_site, start, np.asarray(mu, float),
                        info={"window": (lo, hi)})


def trace_chain(driver: IidStep, sites: Sequence, grid_size: int | None = None) -> ReducedChain:
    """Trace of a symmetric i.i.d. walk on the finite set ``sites`` (via the potential kernel)."""
    if driver.kind != "iid" or not driver.is_symmetric:
        raise ExcursionError("trace chain needs a symmetric i.i.d. step law")
    d = driver.d
    sites = _site_list(sites, d)
    k = len(sites)
    diffs = sorted({tuple(a - b for a, b in zip(x, z)) for x in sites for z in sites})
    ests = g_fourier_many(driver, diffs, grid_size)
    a = {e.p: e.value / 2 for e in ests}
    err = max(e.error_bound for e in ests)
    A = np.array([[a[tuple(p - q for p, q in zip(x, z))] for z in sites] for x in sites])
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = A
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.zeros((k + 1, k))
    rhs[:k, :k] = np.eye(k)
    sol = np.linalg.solve(M, rhs)
    Q = np.eye(k) + sol[:k, :k]
    neg = float(min(Q.min(), 0.0))
    Q = np.clip(Q, 0.0, None)
    Q /= Q.sum(axis=1, keepdims=True)
    return ReducedChain("trace", sites, Q, np.arange(k, dtype=np.int64), np.array([0]), np.ones(1),
                        info={"kernel_error": err, "clipped": neg})


def reduced_chain(driver: Driver, sites: Sequence) -> ReducedChain:
    if is_skip_free(driver):
        return window_chain(driver, sites)
    if driver.kind == "iid" and driver.is_symmetric:
        return trace_chain(driver, sites)
    raise ExcursionError("no exact reduced chain for this driver; use the direct engine")


def _site_list(sites: Sequence, d: int) -> list:
    out = [origin(d)]
    for p in sites:
        q = as_point(p, d)
        if q not in out:
            out.append(q)
    return out


def _absorption(T: np.ndarray, absorbing: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """H[j, e] = P_j(first absorbing node hit at time >= 0 is targets[e])."""
    n = T.shape[0]
    trans = np.flatnonzero(~absorbing)
    H = np.zeros((n, len(targets)))
    for e, t in enumerate(targets):
        H[t, e] = 1.0
    if len(trans):
        A = np.eye(len(trans)) - T[np.ix_(trans, trans)]
        B = T[np.ix_(trans, targets)]
        H[trans] = np.linalg.solve(A, B)
    return H


def hit_structure(chain: ReducedChain, site) -> tuple:
    """(a, B): a[e] = P(first visit to ``site`` is at node e), B = return matrix among site nodes."""
    idx = chain.sites.index(as_point(site))
    if idx == 0:
        raise ExcursionError("site must differ from the origin")
    tgt = np.flatnonzero(chain.node_site == idx)
    orig = np.flatnonzero(chain.node_site == 0)
    absorbing = np.zeros(chain.T.shape[0], dtype=bool)
    absorbing[tgt] = True
    absorbing[orig] = True
    H = _absorption(chain.T, absorbing, tgt)
    first = chain.start_probs @ chain.T[chain.start_nodes]
    a = first @ H
    B = chain.T[tgt] @ H
    return a, B


def visit_distribution(chain: ReducedChain, site, tail: float = 1e-12) -> np.ndarray:
    """Exact law of N_site over one excursion, truncated once the remaining mass is below ``tail``."""
    a, B = hit_structure(chain, site)
    pmf = [1.0 - a.sum()]
    v = a.copy()
    one = np.ones(len(a))
    esc = one - B @ one
    while v.sum() > tail:
        pmf.append(float(v @ esc))
        v = v @ B
        if len(pmf) > 10**7:
            raise ExcursionError("visit distribution does not decay")
    return np.array(pmf)


def alpha_exact(chain: ReducedChain, site) -> float:
    """alpha(p) = 1 / P(N_p > 0) from the reduced chain."""
    a, _ = hit_structure(chain, site)
    return 1.0 / a.sum()


def conditioned_chain(chain: ReducedChain, site) -> ReducedChain:
    """Doob h-transform of ``chain`` conditioned on visiting ``site`` before returning to 0.

    Nodes are doubled: phase 0 (site not yet visited) uses Q(i,j) h(j)/h(i),
    phase 1 uses Q.  The importance weight h(0) = P(N_site > 0) is stored.
    """
    idx = chain.sites.index(as_point(site))
    T = chain.T
    n = T.shape[0]
    tgt = np.flatnonzero(chain.node_site == idx)
    orig = np.flatnonzero(chain.node_site == 0)
    absorbing = np.zeros(n, dtype=bool)
    absorbing[tgt] = True
    absorbing[orig] = True
    h = _absorption(T, absorbing, tgt).sum(axis=1)
    h[orig] = 0.0
    h_start = T[chain.start_nodes] @ h
    weight = float(chain.start_probs @ h_start)
    D = np.zeros((2 * n, 2 * n))
    is_t = np.zeros(n, dtype=bool)
    is_t[tgt] = True
    for i in range(n):
        hi = h[i] if i not in set(chain.start_nodes) or chain.node_site[i] != 0 else 0.0
        base = h_start[list(chain.start_nodes).index(i)] if chain.node_site[i] == 0 and i in chain.start_nodes else hi
        if base > 0:
            for j in np.flatnonzero(T[i] > 0):
                w = T[i, j] * h[j] / base
                if w > 0:
                    D[i, n + j if is_t[j] else j] += w
        else:
            D[i, i] = 1.0
        D[n + i, n:] = T[i]
    # phase-0 target nodes are never entered; give them the phase-1 rows
    D[tgt] = D[n + tgt]
    node_site = np.concatenate([chain.node_site, chain.node_site])
    sp_ = chain.start_probs * h_start
    sp_ = sp_ / sp_.sum()
    return ReducedChain("conditioned", chain.sites, D, node_site, chain.start_nodes, sp_, weight,
                        info={"base": chain.kind, "h0": weight})


# engines

def _chain_worker(chain: ReducedChain, arrays, n: int, gen, chained: bool) -> tuple:
    succ, cum = arrays
    start_cum = np.cumsum(chain.start_probs)
    start_cum /= start_cum[-1]
    start_cum[-1] = 1.0
    visits, steps, _ = _mc.chain_excursions(succ, cum, chain.node_site, chain.start_nodes, start_cum,
                                            n, len(chain.sites), chained, -1, gen)
    return visits, steps


def _direct_tables(driver: Driver):
    if driver.kind == "iid":
        m = len(driver.probs)
        nxt = np.zeros((1, m), dtype=np.int64)
        step = np.zeros((1, m, 2), dtype=np.int64)
        step[0, :, : driver.d] = driver.points
        probs = driver.probs[None, :]
    else:
        S = driver.n_states
        nxt = np.tile(np.arange(S), (S, 1))
        step = np.zeros((S, S, 2), dtype=np.int64)
        step[:, :, : driver.d] = driver.step[None, :, :]
        probs = driver.transition
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    bits = 0
    table = np.zeros((1, 1), dtype=np.int64)
    for b in range(1, 11):
        scaled = probs * 2**b
        if np.allclose(scaled, np.round(scaled), atol=1e-12):
            bits = b
            counts = np.round(scaled).astype(np.int64)
            table = np.zeros((probs.shape[0], 2**b), dtype=np.int64)
            for s in range(probs.shape[0]):
                table[s] = np.repeat(np.arange(probs.shape[1]), counts[s])
            break
    return nxt, step, cum, table, bits


def _direct_worker(driver: Driver, sites: list, n: int, cap: int, gen, chained: bool) -> tuple:
    nxt, step, cum, table, bits = _direct_tables(driver)
    W = max(max(abs(c) for c in p) for p in sites)
    lookup = np.full((2 * W + 1, 2 * W + 1), -1, dtype=np.int64)
    for i, p in enumerate(sites):
        x, y = p[0], (p[1] if driver.d == 2 else 0)
        lookup[x + W, y + W] = i
    start_cum = np.cumsum(driver.stationary)
    start_cum[-1] = 1.0
    visits, lengths, cens, _ = _mc.direct_excursions(nxt, step, cum, table, bits, lookup, W, driver.d, start_cum,
                                                     n, len(sites), cap, chained, -1, gen)
    return visits, lengths, cens


def sample_excursions(driver: Driver, sites: Sequence, n: int, seed: int, experiment="excursions",
                      engine: str = "auto", workers: int = 1, cap: int = DEFAULT_CAP, chained: bool = False,
                      chain: ReducedChain | None = None) -> ExcursionBatch:
    """Draw ``n`` excursions, split over ``workers`` independent streams (fixed order)."""
    if engine == "auto":
        engine = "reduced" if (chain is not None or is_skip_free(driver)
                               or (driver.kind == "iid" and driver.is_symmetric)) else "direct"
    counts = split_counts(n, workers)
    gens = [stream(seed, experiment, engine, w) for w in range(workers)]
    if engine == "direct":
        slist = _site_list(sites, driver.d)
        job = lambda c, g: _direct_worker(driver, slist, c, cap, g, chained)  # noqa: E731
    else:
        ch = chain if chain is not None else reduced_chain(driver, sites)
        slist = ch.sites
        arrays = ch.arrays()
        job = lambda c, g: _chain_worker(ch, arrays, c, g, chained)  # noqa: E731
    if workers == 1:
        parts = [job(counts[0], gens[0])]
    else:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, counts, gens))
    visits = np.concatenate([p[0] for p in parts])
    if engine == "direct":
        lengths = np.concatenate([p[1] for p in parts])
        cens = np.concatenate([p[2] for p in parts])
        return ExcursionBatch(slist, visits, lengths, cens, "direct")
    cens = np.zeros(len(visits), dtype=bool)
    return ExcursionBatch(slist, visits, None, cens, ch.kind, ch.weight)


def simulate_excursion(driver: Driver, observables: Sequence[Observable], rng: np.random.Generator,
                       cap: int = DEFAULT_CAP, track: Sequence = ()) -> ExcursionRecord:
    """One excursion of the walk itself from 0 until its first return."""
    pts = list(track)
    for obs in observables:
        pts.extend(obs.points)
    sites = _site_list(pts, driver.d)
    visits, lengths, cens = _direct_worker(driver, sites, 1, cap, rng, False)
    vis = {p: int(c) for p, c in zip(sites, visits[0])}
    sums = [sum(b * vis[p] for p, b in zip(obs.points, obs.weights)) for obs in observables]
    return ExcursionRecord(int(lengths[0]), vis, sums, bool(cens[0]))


# alpha(p) brackets

@dataclass(frozen=True)
class AlphaBracket:
    lo: float
    hi: float
    box_radius: int
    method: str
    converged: bool = True

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack


def _box_index(R: int, d: int):
    w = 2 * R + 1
    if d == 1:
        coords = np.arange(-R, R + 1)[:, None]
    else:
        g = np.arange(-R, R + 1)
        coords = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)

    def idx(c):
        c = np.asarray(c) + R
        inside = np.all((c >= 0) & (c < w), axis=-1)
        flat = c[..., 0] if d == 1 else c[..., 0] * w + c[..., 1]
        return np.where(inside, flat, -1)

    return coords, idx


def _escape_bounds(step: IidStep, p: tuple, R: int) -> tuple:
    """Rayleigh bracket: free (Neumann) box gives a lower, shorted exterior an upper bound."""
    d = step.d
    coords, idx = _box_index(R, d)
    n = len(coords)
    rows, cols, vals = [], [], []
    out_cond = np.zeros(n)
    for a, w in zip(step.points, step.probs):
        if not np.any(a):
            continue
        j = idx(coords + a)
        ok = j >= 0
        rows.append(np.flatnonzero(ok))
        cols.append(j[ok])
        vals.append(np.full(ok.sum(), w))
        out_cond[~ok] += w
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    C = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    i0 = int(idx(np.zeros(d, dtype=int)))
    ip = int(idx(np.array(p)))
    res = []
    for shorted in (False, True):
        if shorted:
            # node n is the whole exterior shorted together
            Z = sp.csr_matrix(out_cond[:, None])
            C2 = sp.bmat([[C, Z], [Z.T, None]], format="csr")
        else:
            C2 = C
        m = C2.shape[0]
        deg = np.asarray(C2.sum(axis=1)).ravel()
        Lap = sp.diags(deg) - C2
        free = np.ones(m, dtype=bool)
        free[[i0, ip]] = False
        fidx = np.flatnonzero(free)
        # potential 1 at 0, 0 at p
        rhs = -Lap[fidx][:, [i0]].toarray().ravel()
        v = np.zeros(m)
        v[i0] = 1.0
        v[fidx] = spla.spsolve(Lap[fidx][:, fidx].tocsc(), rhs)
        current = float((Lap[[i0]] @ v)[0])
        res.append(current)
    return res[0], res[1]


def _absorbing_bounds(step: IidStep, p: tuple, R: int) -> tuple:
    """Walk killed on leaving the box, counted as reaching 0 (lower) or p (upper)."""
    d = step.d
    coords, idx = _box_index(R, d)
    n = len(coords)
    i0 = int(idx(np.zeros(d, dtype=int)))
    ip = int(idx(np.array(p)))
    rows, cols, vals = [], [], []
    out = np.zeros(n)
    for a, w in zip(step.points, step.probs):
        j = idx(coords + a)
        ok = j >= 0
        rows.append(np.flatnonzero(ok))
        cols.append(j[ok])
        vals.append(np.full(ok.sum(), w))
        out[~ok] += w
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    free = np.ones(n, dtype=bool)
    free[[i0, ip]] = False
    fidx = np.flatnonzero(free)
    A = (sp.eye(len(fidx)) - P[fidx][:, fidx]).tocsc()
    to_p = P[fidx][:, [ip]].toarray().ravel()
    lu = spla.splu(A)
    h_lo = np.zeros(n)
    h_hi = np.zeros(n)
    h_lo[ip] = h_hi[ip] = 1.0
    h_lo[fidx] = lu.solve(to_p)
    h_hi[fidx] = lu.solve(to_p + out[fidx])
    first = P[i0].toarray().ravel()
    lo = float(first @ h_lo)
    hi = float(first @ h_hi + out[i0])
    return lo, hi


def alpha_dp(step: IidStep, p, box_radius: int | None = None, tol: float = 1e-3, method: str = "auto",
             max_radius: int | None = None) -> AlphaBracket:
    """Bracket [lo, hi] for alpha(p)^-1 = P_0(hit p before returning to 0).

    ``rayleigh`` (default for symmetric steps): the walk is a reversible
    electrical network with conductances P(y - x); the escape probability is
    the effective conductance between 0 and p, bounded below by the free box
    and above by the box with its exterior shorted to a single node.
    ``absorbing``: exits from the box are sent to 0 (lower) or to p (upper).
    The box doubles until hi - lo <= tol.
    """
    if step.kind != "iid":
        raise ExcursionError("alpha_dp needs an i.i.d. step law")
    p = as_point(p, step.d)
    if not any(p):
        raise ExcursionError("alpha(0) is not a hitting problem; p must be nonzero")
    if method == "auto":
        method = "rayleigh" if step.is_symmetric else "absorbing"
    if method == "rayleigh" and not step.is_symmetric:
        raise ExcursionError("the Rayleigh bracket needs a symmetric step law")
    fn = _escape_bounds if method == "rayleigh" else _absorbing_bounds
    reach = max(abs(c) for c in p) + step.max_step
    R = box_radius or max(8, 4 * reach)
    cap = max_radius or (1 << 18 if step.d == 1 else 384)
    while True:
        lo, hi = fn(step, p, R)
        if hi - lo <= tol or R >= cap:
            return AlphaBracket(lo, hi, R, method, converged=hi - lo <= tol)
        R = min(2 * R, cap)


# statistics

def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple:
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    den = 1 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(c - h, 0.0), min(c + h, 1.0)


def bootstrap_moment(values: np.ndarray, q: float, seed: int, reps: int = 400, level: float = 0.95) -> tuple:
    """Mean of |values|^q with a percentile bootstrap CI (resampling the value histogram)."""
    vals, cnt = np.unique(np.abs(values), return_counts=True)
    n = cnt.sum()
    pw = vals.astype(float) ** q
    est = float(pw @ cnt / n)
    g = stream(seed, "bootstrap", q)
    boots = g.multinomial(n, cnt / n, size=reps) @ pw / n
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    return est, (float(lo), float(hi))


@dataclass
class HitStats:
    p: tuple
    alpha_hat: float
    alpha_ci: tuple
    hit_fraction: float
    conditional_Np: dict
    n0p_mean: float
    n0p_se: float
    kac_mean: float
    kac_se: float
    moments: dict
    n_excursions: int
    censored_rate: float
    engine: str
    reliable: bool = True

    def to_json(self) -> dict:
        return {
            "p": list(self.p),
            "alpha_hat": self.alpha_hat,
            "alpha_ci": list(self.alpha_ci),
            "hit_fraction": self.hit_fraction,
            "conditional_Np": {str(k): v for k, v in self.conditional_Np.items()},
            "n0p_mean": self.n0p_mean,
            "n0p_se": self.n0p_se,
            "kac_mean": self.kac_mean,
            "kac_se": self.kac_se,
            "moments": {str(q): {"value": v, "ci": list(ci)} for q, (v, ci) in self.moments.items()},
            "n_excursions": self.n_excursions,
            "censored_rate": self.censored_rate,
            "engine": self.engine,
            "reliable": self.reliable,
        }


def n0p_values(hit: np.ndarray) -> np.ndarray:
    """N_{0,p} along a chain of excursions: steps to the next excursion (inclusive) that hits p."""
    idx = np.flatnonzero(hit)
    if len(idx) == 0:
        return np.zeros(0, dtype=np.int64)
    upto = idx[-1] + 1
    nxt = idx[np.searchsorted(idx, np.arange(upto))]
    return nxt - np.arange(upto)


def hit_stats(driver: Driver, p, n_excursions: int, seed: int, moments_q: Sequence = (1, 2, 3),
              engine: str = "auto", workers: int = 1, cap: int = DEFAULT_CAP) -> HitStats:
    """Statistics of N_p over ``n_excursions`` consecutive excursions."""
    if n_excursions < 1000:
        raise ExcursionError("hit_stats needs at least 1000 excursions")
    p = as_point(p, driver.d)
    batch = sample_excursions(driver, [p], n_excursions, seed, ("hit", p), engine, workers, cap, chained=True)
    cr = batch.censored_rate
    b = batch.valid()
    N = b.counts(p)
    n = len(N)
    k = int(np.count_nonzero(N))
    lo, hi = wilson_interval(k, n)
    alpha_hat = n / k if k else float("inf")
    cond_vals, cond_cnt = np.unique(N[N > 0], return_counts=True)
    n0p = n0p_values(N > 0)
    f = N - 1
    mom = {q: bootstrap_moment(f, q, seed) for q in moments_q}
    return HitStats(
        p=p,
        alpha_hat=alpha_hat,
        alpha_ci=(1 / hi if hi > 0 else float("inf"), 1 / lo if lo > 0 else float("inf")),
        hit_fraction=k / n,
        conditional_Np={int(v): int(c) for v, c in zip(cond_vals, cond_cnt)},
        n0p_mean=float(n0p.mean()) if len(n0p) else float("nan"),
        n0p_se=_batch_se(n0p.astype(float)),
        kac_mean=float(N.mean()),
        kac_se=float(N.std(ddof=1) / math.sqrt(n)),
        moments=mom,
        n_excursions=n,
        censored_rate=cr,
        engine=batch.engine,
        reliable=cr <= CENSOR_FLAG_RATE,
    )


def _batch_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated sequence by non-overlapping batch means."""
    if len(x) < 2 * n_batches:
        return float(x.std(ddof=1) / math.sqrt(max(len(x), 1))) if len(x) > 1 else float("nan")
    m = len(x) // n_batches
    bm = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(bm.std(ddof=1) / math.sqrt(n_batches))


def conditioned_samples(driver: Driver, p, n: int, seed: int, workers: int = 1,
                        extra_sites: Sequence = ()) -> tuple:
    """n excursions conditioned on N_p > 0 (h-transform of the reduced chain) and the weight 1/alpha(p)."""
    p = as_point(p, driver.d)
    base = reduced_chain(driver, [p, *extra_sites])
    cond = conditioned_chain(base, p)
    batch = sample_excursions(driver, [p], n, seed, ("conditioned", p), "reduced", workers, chain=cond)
    return batch, cond.weight


def geometric_exp_ks(alpha: float, scale: float | None = None, kmax: int | None = None) -> float:
    """sup_t |P(G / scale <= t) - (1 - e^{-t})| for G ~ Geometric(1/alpha) on {1, 2, ...}."""
    s = 1.0 / alpha
    scale = alpha if scale is None else scale
    kmax = kmax or int(60 * alpha + 100)
    k = np.arange(1, kmax + 1)
    t = k / scale
    Fexp = 1 - np.exp(-t)
    Fg_at = 1 - (1 - s) ** k
    Fg_before = 1 - (1 - s) ** (k - 1)
    return float(max(np.abs(Fexp - Fg_at).max(), np.abs(Fexp - Fg_before).max()))


def tail_fit(x: np.ndarray, t_lo: float = 1.0, t_hi: float = 5.0, n_t: int = 41) -> tuple:
    """Fit log P(X > t) = log C - kappa t on t in [t_lo, t_hi]."""
    ts = np.linspace(t_lo, t_hi, n_t)
    xs = np.sort(x)
    surv = 1 - np.searchsorted(xs, ts, side="right") / len(xs)
    ok = surv > 0
    if ok.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(ts[ok], np.log(surv[ok]), 1)
    return float(math.exp(icpt)), float(-slope)


def exp_law_test(driver: Driver, p, n_conditioned: int, seed: int, workers: int = 1,
                 with_dp: bool = True, dp_tol: float = 1e-4) -> dict:
    """KS distance of N_p / alpha_hat(p) given N_p > 0 from Exp(1), and an exponential tail fit."""
    p = as_point(p, driver.d)
    batch, weight = conditioned_samples(driver, p, n_conditioned, seed, workers)
    N = batch.counts(p)
    alpha_hat = 1.0 / weight
    x = N / alpha_hat
    ks = stats.kstest(x, "expon")
    C, kappa = tail_fit(x)
    out = {
        "p": list(p),
        "alpha_hat": alpha_hat,
        "ks_stat": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "tail_fit": (C, kappa),
        "n_conditioned": int(len(N)),
        "engine": f"h-transform/{batch.engine}",
        "moments": {q: float(np.mean(np.abs(N - 1.0) ** q)) for q in (1, 2, 3)},
    }
    if with_dp and driver.kind == "iid":
        br = alpha_dp(driver, p, tol=dp_tol)
        out["dp_bracket"] = (br.lo, br.hi)
        out["dp_consistent"] = bool(br.contains(weight, slack=1e-9))
    return out


def conditioned_moment_ratio(driver: Driver, p, q: float, n_conditioned: int, seed: int, workers: int = 1) -> dict:
    """E|f_{p,{0}}|^q / (Gamma(1+q) alpha_hat^{q-1}) by importance sampling of N_p > 0.

    E|N_p - 1|^q = (1 - w) + w E[|N_p - 1|^q | N_p > 0] with w = 1/alpha.
    """
    p = as_point(p, driver.d)
    batch, w = conditioned_samples(driver, p, n_conditioned, seed, workers)
    N = batch.counts(p).astype(float)
    vals = np.abs(N - 1.0) ** q
    m = (1 - w) + w * vals.mean()
    se = w * vals.std(ddof=1) / math.sqrt(len(vals))
    alpha_hat = 1.0 / w
    denom = math.gamma(1 + q) * alpha_hat ** (q - 1)
    return {"p": list(p), "q": q, "moment": m, "moment_se": se, "alpha_hat": alpha_hat,
            "ratio": m / denom, "ratio_se": se / denom}


def induced_norm_bound(driver: Driver, obs: Observable, q: float, n_excursions: int, seed: int,
                       workers: int = 1) -> dict:
    """Monte Carlo ||f_{0}||_q against C * sum_p alpha_hat(p)^{1-1/q} |beta(p)|, C = Gamma(1+q)^{1/q}."""
    if q < 1:
        raise ExcursionError("q must be at least 1")
    C = math.gamma(1 + q) ** (1 / q)
    if not obs.points or all(w == 0 for w in obs.weights):
        return {"q": q, "norm": 0.0, "bound": 0.0, "C": C, "holds": True}
    batch = sample_excursions(driver, obs.points, n_excursions, seed, ("norm", q), workers=workers).valid()
    f = batch.induced(obs)
    norm_q = float(np.mean(np.abs(f) ** q) ** (1 / q))
    rhs = 0.0
    alphas = {}
    for p, b in zip(obs.points, obs.weights):
        if not any(p):
            a = 1.0
        else:
            hits = np.count_nonzero(batch.counts(p))
            a = len(f) / hits if hits else float("inf")
        alphas[p] = a
        rhs += a ** (1 - 1 / q) * abs(b)
    return {"q": q, "norm": norm_q, "norm_q_power": norm_q**q, "bound": rhs, "C": C,
            "holds": bool(norm_q <= C * rhs), "alpha_hat": {str(k): v for k, v in alphas.items()},
            "n_excursions": len(f)}
