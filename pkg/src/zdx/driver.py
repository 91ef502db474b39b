"""Step-law generators for Z^d-extensions and exact occupation probabilities.

Two kinds of driver are supported: an i.i.d. lattice step law (:class:`IidStep`)
and a finite-state stationary Markov chain whose step is a function of the
state it moves into (:class:`MarkovDriver`).  Occupation probabilities
``mu(S_k = a)`` are computed exactly (up to float rounding) by iterating the
one-step law over a growing box; mass that leaves the box is tracked and
reported rather than silently dropped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .lattice import as_point, origin

FFT_CELL_THRESHOLD = 512 * 512
DEFAULT_TAIL_EPS = 1e-15


class DriverError(ValueError):
    pass


@dataclass(frozen=True)
class IidStep:
    """I.i.d. lattice step law given by finitely many atoms."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.int64))
        probs = np.asarray(self.probs, dtype=float).ravel()
        if pts.shape[0] != probs.size:
            pts = pts.T if pts.shape[1] == probs.size else pts
        if pts.shape[0] != probs.size or pts.shape[1] not in (1, 2):
            raise DriverError("atoms must be a list of (point, probability) with d in {1, 2}")
        if np.any(probs <= 0):
            raise DriverError("atom probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DriverError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        if len({tuple(p) for p in pts}) != len(pts):
            raise DriverError("atoms must be distinct points")
        mean = probs @ pts
        if np.max(np.abs(mean)) > 1e-12:
            raise DriverError(f"mean step {mean} is not zero")
        pts.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_atoms(cls, atoms: Mapping | Sequence) -> "IidStep":
        items = atoms.items() if isinstance(atoms, Mapping) else atoms
        pts, probs = [], []
        for p, w in items:
            pts.append(as_point(p))
            probs.append(float(w))
        return cls(np.array(pts), np.array(probs))

    kind = "iid"

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_states(self) -> int:
        return 1

    @property
    def stationary(self) -> np.ndarray:
        return np.ones(1)

    @property
    def max_step(self) -> int:
        return int(np.max(np.abs(self.points)))

    @property
    def covariance(self) -> np.ndarray:
        return (self.points * self.probs[:, None]).T @ self.points

    @property
    def is_symmetric(self) -> bool:
        law = {tuple(p): w for p, w in zip(self.points, self.probs)}
        return all(abs(law.get(tuple(-np.asarray(p)), 0.0) - w) < 1e-15 for p, w in law.items())

    def atoms(self) -> list:
        return [(tuple(int(c) for c in p), float(w)) for p, w in zip(self.points, self.probs)]

    def charfun(self, u: np.ndarray) -> np.ndarray:
        """E[exp(i <u, X>)] for u of shape (..., d)."""
        u = np.asarray(u, dtype=float)
        phase = u @ self.points.T.astype(float)
        return np.exp(1j * phase) @ self.probs

    def twisted(self, u: np.ndarray) -> np.ndarray:
        """The 1x1 twisted operator: the characteristic function as a matrix."""
        return self.charfun(u)[..., None, None]

    def to_json(self) -> dict:
        return {"kind": "iid", "d": self.d, "atoms": [[list(p), w] for p, w in self.atoms()]}


@dataclass(frozen=True)
class MarkovDriver:
    """Stationary finite-state Markov chain with step F(s') on entering state s'."""

    transition: np.ndarray
    step: np.ndarray
    stationary: np.ndarray = field(default=None)

    kind = "markov"

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        F = np.asarray(self.step, dtype=np.int64)
        if F.ndim == 1:
            F = F[:, None]
        n = P.shape[0]
        if P.shape != (n, n) or F.shape[0] != n or F.shape[1] not in (1, 2):
            raise DriverError("transition must be n x n and step must have n rows of dimension 1 or 2")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise DriverError("transition matrix must be row-stochastic")
        ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
        if ncomp != 1:
            raise DriverError("transition matrix is not irreducible")
        mu = self.stationary
        if mu is None:
            mu = _stationary(P)
        mu = np.asarray(mu, dtype=float)
        if np.abs(mu @ P - mu).sum() > 1e-10 or abs(mu.sum() - 1) > 1e-10:
            raise DriverError("stationary vector does not satisfy mu P = mu")
        mean = mu @ F
        if np.max(np.abs(mean)) > 1e-10:
            raise DriverError(f"stationary mean step {mean} is not zero")
        for a in (P, F, mu):
            a.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "step", F)
        object.__setattr__(self, "stationary", mu)

    @property
    def d(self) -> int:
        return self.step.shape[1]

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def max_step(self) -> int:
        return int(np.max(np.abs(self.step)))

    @property
    def covariance(self) -> np.ndarray:
        """Stationary one-step covariance of F (not the asymptotic one)."""
        F = self.step.astype(float)
        return (F * self.stationary[:, None]).T @ F

    @property
    def asymptotic_covariance(self) -> np.ndarray:
        """Green-Kubo covariance of the Birkhoff sums of F."""
        P, mu = self.transition, self.stationary
        n = P.shape[0]
        Z = np.linalg.inv(np.eye(n) - P + np.outer(np.ones(n), mu))
        F = self.step.astype(float)
        M = (F * mu[:, None]).T @ (Z @ F)
        return M + M.T - self.covariance

    @property
    def is_symmetric(self) -> bool:
        return False

    def twisted(self, u: np.ndarray) -> np.ndarray:
        """P_u[s, s'] = P[s, s'] exp(i <u, F(s')>) for u of shape (..., d)."""
        u = np.asarray(u, dtype=float)
        phase = np.exp(1j * (u @ self.step.T.astype(float)))
        return self.transition * phase[..., None, :]

    def charfun_n(self, u: np.ndarray, n: int) -> np.ndarray:
        """E_mu[exp(i <u, S_n>)] = mu P_u^n 1."""
        Pu = self.twisted(u)
        w, V = np.linalg.eig(Pu)
        Vinv = np.linalg.inv(V)
        left = np.einsum("s,...sk->...k", self.stationary.astype(complex), V)
        right = Vinv.sum(axis=-1)
        return np.einsum("...k,...k->...", left * w**n, right)

    def to_json(self) -> dict:
        return {
            "kind": "markov",
            "d": self.d,
            "transition": self.transition.tolist(),
            "step": self.step.tolist(),
        }


def _stationary(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(A, b, rcond=None)
    return mu


Driver = IidStep | MarkovDriver


def driver_from_json(data: Mapping) -> Driver:
    kind = data.get("kind")
    if kind == "iid":
        d = int(data["d"])
        atoms = [(as_point(p, d), w) for p, w in data["atoms"]]
        return IidStep.from_atoms(atoms)
    if kind == "markov":
        step = np.asarray(data["step"], dtype=np.int64)
        if step.ndim == 1:
            step = step[:, None]
        if "d" in data and step.shape[1] != int(data["d"]):
            raise DriverError("step dimension does not match d")
        return MarkovDriver(np.asarray(data["transition"], dtype=float), step)
    raise DriverError(f"unknown driver kind {kind!r}")


def load_driver(path: str | Path) -> Driver:
    return driver_from_json(json.loads(Path(path).read_text()))


# canonical fixtures

def lazy_1d() -> IidStep:
    return IidStep.from_atoms({(0,): 0.5, (1,): 0.25, (-1,): 0.25})


def lazy_2d() -> IidStep:
    return IidStep.from_atoms(
        {(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125}
    )


def pm1_walk() -> IidStep:
    return IidStep.from_atoms({(1,): 0.5, (-1,): 0.5})


def markov_3state() -> MarkovDriver:
    """Non-reversible doubly stochastic chain with steps +1, -1, 0."""
    P = np.array([[0.2, 0.5, 0.3], [0.3, 0.2, 0.5], [0.5, 0.3, 0.2]])
    return MarkovDriver(P, np.array([[1], [-1], [0]]))


def cyclic_chain(M: int) -> MarkovDriver:
    """M-cyclic chain on M blocks of three states; block i moves to block i+1 mod M.

    Each block-to-block matrix is doubly stochastic, so the stationary law is
    uniform and the steps (+1, -1, 0) in every block have zero mean.
    """
    if M < 1:
        raise DriverError("M must be positive")
    base = np.array([[0.2, 0.5, 0.3], [0.3, 0.2, 0.5], [0.5, 0.3, 0.2]])
    mats = [base, base.T, np.array([[0.1, 0.6, 0.3], [0.6, 0.3, 0.1], [0.3, 0.1, 0.6]])]
    P = np.zeros((3 * M, 3 * M))
    for i in range(M):
        j = (i + 1) % M
        P[3 * i:3 * i + 3, 3 * j:3 * j + 3] = mats[i % 3]
    return MarkovDriver(P, np.tile([[1], [-1], [0]], (M, 1)))


def fixtures() -> dict:
    return {"lazy_1d": lazy_1d(), "lazy_2d": lazy_2d(), "markov_3state": markov_3state()}


# sampling

@dataclass(frozen=True)
class Trajectory:
    positions: np.ndarray
    states: np.ndarray | None = None


def initial_state(driver: Driver, rng: np.random.Generator) -> int:
    if driver.kind == "iid":
        return 0
    return int(rng.choice(driver.n_states, p=driver.stationary))


def step_sample(driver: Driver, rng: np.random.Generator, state: int = 0):
    """One step from ``state``: returns (step point, next state)."""
    if driver.kind == "iid":
        i = int(rng.choice(len(driver.probs), p=driver.probs))
        return tuple(int(c) for c in driver.points[i]), 0
    nxt = int(rng.choice(driver.n_states, p=driver.transition[state]))
    return tuple(int(c) for c in driver.step[nxt]), nxt


def sample_trajectory(driver: Driver, n: int, rng: np.random.Generator, state: int | None = None) -> Trajectory:
    d = driver.d
    pos = np.zeros((n + 1, d), dtype=np.int64)
    if driver.kind == "iid":
        idx = rng.choice(len(driver.probs), size=n, p=driver.probs)
        pos[1:] = np.cumsum(driver.points[idx], axis=0)
        return Trajectory(pos)
    s = initial_state(driver, rng) if state is None else state
    states = np.empty(n + 1, dtype=np.int64)
    states[0] = s
    cum = np.cumsum(driver.transition, axis=1)
    u = rng.random(n)
    for k in range(n):
        s = min(int(np.searchsorted(cum[s], u[k], side="right")), driver.n_states - 1)
        states[k + 1] = s
    pos[1:] = np.cumsum(driver.step[states[1:]], axis=0)
    return Trajectory(pos, states)


# exact occupation probabilities

def tail_radius(driver: Driver, k: int, eps: float = DEFAULT_TAIL_EPS) -> int:
    """Radius beyond which the mass of S_k is below ``eps`` (Bernstein bound).

    For Markov drivers the variance proxy is twice the asymptotic variance;
    this is a heuristic, and escaped mass is always tracked separately.
    """
    if k <= 0:
        return 0
    m = driver.max_step
    if eps <= 0:
        return k * m
    if driver.kind == "iid":
        var = float(np.max(np.diag(driver.covariance)))
    else:
        var = 2.0 * float(max(np.max(np.diag(driver.asymptotic_covariance)), np.max(np.diag(driver.covariance))))
    L = math.log(2 * driver.d / eps)
    r = m * L / 3 + math.sqrt((m * L / 3) ** 2 + 2 * k * var * L)
    return min(int(math.ceil(r)) + m, k * m)


class OccupationStream:
    """Iterates the state-resolved law of (S_k, X_k) on a growing box.

    ``mass[s, cell]`` holds mu(S_k = a, X_k = s) with the origin at the array
    centre.  The active radius at step k is min(k * max_step, tail radius,
    box_radius); mass pushed past it is added to :attr:`escaped`.
    """

    def __init__(self, driver: Driver, box_radius: int, eps: float = DEFAULT_TAIL_EPS):
        self.driver = driver
        self.d = driver.d
        self.m = driver.max_step
        self.R = int(box_radius)
        self.eps = eps
        self.pad = self.R + self.m
        S = driver.n_states
        shape = (S,) + (2 * self.pad + 1,) * self.d
        self.cur = np.zeros(shape)
        self.nxt = np.zeros(shape)
        self.cur[(slice(None),) + (self.pad,) * self.d] = driver.stationary
        self.k = 0
        self.rho = 0
        self.escaped = 0.0
        self.total = 1.0
        if driver.kind == "iid":
            self._atoms = [(tuple(int(c) for c in p), float(w)) for p, w in zip(driver.points, driver.probs)]
        else:
            self._PT = np.ascontiguousarray(driver.transition.T)
            self._steps = [tuple(int(c) for c in f) for f in driver.step]

    def _region(self, r: int, shift: Sequence[int] | None = None) -> tuple:
        c = self.pad
        if shift is None:
            return tuple(slice(c - r, c + r + 1) for _ in range(self.d))
        return tuple(slice(c - r - s, c + r + 1 - s) for s in shift)

    def advance(self) -> None:
        k1 = self.k + 1
        rho_new = max(self.rho, min(self.rho + self.m, self.R, tail_radius(self.driver, k1, self.eps)))
        reg = self._region(rho_new)
        cur, nxt = self.cur, self.nxt
        if self.driver.kind == "iid":
            out = nxt[0]
            src = cur[0]
            for i, (a, w) in enumerate(self._atoms):
                if i == 0:
                    np.multiply(src[self._region(rho_new, a)], w, out=out[reg])
                else:
                    out[reg] += w * src[self._region(rho_new, a)]
        else:
            big = rho_new + self.m
            breg = self._region(big)
            mix = np.tensordot(self._PT, cur[(slice(None),) + breg], axes=1)
            for s, f in enumerate(self._steps):
                inner = tuple(slice(self.m - fi, self.m - fi + 2 * rho_new + 1) for fi in f)
                nxt[(s,) + reg] = mix[(s,) + inner]
        new_total = float(nxt[(slice(None),) + reg].sum())
        self.escaped += max(self.total - new_total, 0.0)
        self.total = new_total
        self.cur, self.nxt = nxt, cur
        self.rho = rho_new
        self.k = k1

    def _index(self, p) -> tuple:
        return tuple(self.pad + int(c) for c in p)

    def values(self, points: Sequence, state_resolved: bool = False) -> np.ndarray:
        """mu(S_k = p) for each p (or per state, shape (S, len(points)))."""
        idx = [self._index(p) for p in points]
        out = np.empty((self.driver.n_states, len(idx)))
        for j, ix in enumerate(idx):
            if any(abs(i - self.pad) > self.pad for i in ix):
                out[:, j] = 0.0
            else:
                out[:, j] = self.cur[(slice(None),) + ix]
        return out if state_resolved else out.sum(axis=0)

    def marginal(self) -> np.ndarray:
        """mu(S_k = .) on the active region (origin at the centre)."""
        return self.cur[(slice(None),) + self._region(self.rho)].sum(axis=0)


def default_box_radius(driver: Driver, n: int, eps: float = DEFAULT_TAIL_EPS) -> int:
    return max(tail_radius(driver, n, eps), 1)


def iter_occupation(driver: Driver, n: int, box_radius: int | None = None) -> Iterator[OccupationStream]:
    """Yield the occupation stream at k = 0, 1, ..., n."""
    R = default_box_radius(driver, n) if box_radius is None else box_radius
    st = OccupationStream(driver, R)
    yield st
    for _ in range(n):
        st.advance()
        yield st


def lattice_terms(driver: Driver, points: Sequence, n: int, box_radius: int | None = None,
                  state_resolved: bool = False) -> tuple:
    """Array of mu(S_k = p) for k = 0..n and each p; also the escaped mass."""
    pts = [as_point(p, driver.d) for p in points]
    shape = (n + 1, driver.n_states, len(pts)) if state_resolved else (n + 1, len(pts))
    out = np.empty(shape)
    st = None
    for st in iter_occupation(driver, n, box_radius):
        out[st.k] = st.values(pts, state_resolved)
    return out, st.escaped


@dataclass
class OccupationTable:
    """mu(S_k = a) for k = 0..n on the box |a|_inf <= box_radius."""

    n: int
    box_radius: int
    probs: np.ndarray
    escaped: np.ndarray
    state_probs: np.ndarray | None = None

    def prob(self, k: int, a) -> float:
        a = as_point(a)
        if max(abs(c) for c in a) > self.box_radius:
            return 0.0
        idx = tuple(self.box_radius + c for c in a)
        return float(self.probs[(k,) + idx])

    def mass(self, k: int) -> float:
        return float(self.probs[k].sum())


def occupation_probs(driver: Driver, n: int, box_radius: int | None = None, state_resolved: bool = False) -> OccupationTable:
    """Exact occupation table for k <= n on the box |a|_inf <= box_radius.

    The box defaults to n * max_step (nothing can escape).  When the box has
    more than 512^2 cells the table is filled by cyclic convolution per k
    (see :func:`distribution_at`) instead of stencil iteration.
    """
    R = n * driver.max_step if box_radius is None else int(box_radius)
    d, S = driver.d, driver.n_states
    width = 2 * R + 1
    probs = np.zeros((n + 1,) + (width,) * d)
    sprobs = np.zeros((n + 1, S) + (width,) * d) if state_resolved else None
    escaped = np.zeros(n + 1)
    if width**d > FFT_CELL_THRESHOLD and not state_resolved:
        for k in range(n + 1):
            dist, tail = distribution_at(driver, k, R)
            probs[k] = dist
            escaped[k] = max(1.0 - dist.sum(), 0.0)
        return OccupationTable(n, R, probs, escaped)
    st = OccupationStream(driver, R, eps=0.0)
    for k in range(n + 1):
        if k:
            st.advance()
        r = st.rho
        sl = tuple(slice(R - r, R + r + 1) for _ in range(d))
        block = st.cur[(slice(None),) + st._region(r)]
        probs[(k,) + sl] = block.sum(axis=0)
        if state_resolved:
            sprobs[(k, slice(None)) + sl] = block
        escaped[k] = st.escaped
    return OccupationTable(n, R, probs, escaped, sprobs)


def distribution_at(driver: Driver, k: int, box_radius: int | None = None, eps: float = DEFAULT_TAIL_EPS):
    """Law of S_k on |a|_inf <= r by inverting the characteristic function.

    A cyclic grid of N >= 2 r' + 1 points per axis is used, r' covering the
    range up to a tail of mass ``eps``; the wrapped mass is bounded by that
    tail.  Returns (array centred at the origin, tail bound).
    """
    d = driver.d
    reach = min(k * driver.max_step, tail_radius(driver, k, eps)) if k else 0
    r = reach if box_radius is None else int(box_radius)
    N = 1 << int(math.ceil(math.log2(2 * max(reach, r) + 2)))
    freqs = 2 * np.pi * np.arange(N) / N
    if d == 1:
        u = freqs[:, None]
    else:
        u = np.stack(np.meshgrid(freqs, freqs, indexing="ij"), axis=-1)
    if driver.kind == "iid":
        vals = driver.charfun(u) ** k
    else:
        vals = driver.charfun_n(u, k)
    dist = np.real(np.fft.fftn(vals)) / N**d
    dist = np.fft.fftshift(dist)
    c = N // 2
    sl = tuple(slice(c - r, c + r + 1) for _ in range(d))
    tail = eps if k * driver.max_step > reach else 0.0
    return dist[sl], tail


def return_probabilities(driver: Driver, n: int) -> np.ndarray:
    """mu(S_k = 0) for k = 0..n-1."""
    terms, _ = lattice_terms(driver, [origin(driver.d)], max(n - 1, 0))
    return terms[:n, 0]


def return_mass(driver: Driver, n: int) -> float:
    """Sum_{k=0}^{n-1} mu(S_k = 0)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return float(math.fsum(return_probabilities(driver, n)))
