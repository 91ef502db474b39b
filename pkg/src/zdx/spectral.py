"""Twisted transfer operators of finite drivers and what they determine.

The twisted operator ``P_u[s, s'] = P[s, s'] exp(i <u, F(s')>)`` is decomposed
on a torus grid as ``P_u = lambda_u Pi_u + R_u``; from the dominant branch we
recover the stable parameters, the limit density at 0 and the normalizing
sequences.  An independent lattice criterion (the group generated by cycle
displacements and lengths) cross-checks the aperiodicity verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import integrate, signal

from .driver import Driver, distribution_at
from .lattice import StableParams

UNIT_TOL = 1e-9
DEFAULT_GAP = 0.05
FIT_RESIDUAL_TOL = 1e-3


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class TwistedOperator:
    u: np.ndarray
    matrix: np.ndarray

    @classmethod
    def at(cls, driver: Driver, u) -> "TwistedOperator":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (driver.d,):
            raise SpectralError(f"u must have {driver.d} coordinates")
        return cls(u, _twisted(driver, u))


def _twisted(driver: Driver, u: np.ndarray) -> np.ndarray:
    """Twisted matrices for u of shape (..., d); iid drivers lift to 1x1."""
    return driver.twisted(u)


def torus_grid(grid_size: int, d: int) -> np.ndarray:
    """Grid -pi + 2 pi k / G, k < G, per axis (contains 0 for even G)."""
    ax = -np.pi + 2 * np.pi * np.arange(grid_size) / grid_size
    if d == 1:
        return ax[:, None]
    return np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)


# lattice criterion

def _integer_echelon(rows: list) -> list:
    """Row echelon form over Z by Euclid steps (a Hermite-type basis)."""
    A = [list(r) for r in rows if any(r)]
    ncol = len(rows[0]) if rows else 0
    basis = []
    for c in range(ncol):
        piv = [r for r in A if r[c] != 0]
        rest = [r for r in A if r[c] == 0]
        while len(piv) > 1:
            piv.sort(key=lambda r: abs(r[c]))
            head = piv[0]
            nxt = []
            for r in piv[1:]:
                q = r[c] // head[c]
                rr = [x - q * y for x, y in zip(r, head)]
                (nxt if rr[c] != 0 else rest).append(rr)
            piv = [head] + nxt
        if piv:
            basis.append(piv[0])
        A = [r for r in rest if any(r)]
    return basis


def cycle_generators(driver: Driver) -> list:
    """(length, displacement) of every simple cycle of the transition graph."""
    if driver.kind == "iid":
        return [(1,) + tuple(int(c) for c in p) for p in driver.points]
    P = driver.transition
    g = nx.DiGraph()
    n = P.shape[0]
    g.add_nodes_from(range(n))
    g.add_edges_from((i, j) for i in range(n) for j in range(n) if P[i, j] > 0)
    gens = []
    for cyc in nx.simple_cycles(g):
        disp = driver.step[cyc].sum(axis=0)
        gens.append((len(cyc),) + tuple(int(c) for c in disp))
    return gens


@dataclass(frozen=True)
class LatticeVerdict:
    aperiodic: bool
    index: int
    basis: list


def lattice_aperiodicity(driver: Driver) -> LatticeVerdict:
    """Aperiodic iff the group H generated by (length, displacement) of cycles contains {0} x Z^d.

    A unit-modulus eigenvalue exp(i theta) of P_u forces <u, D> = l theta mod
    2 pi along every cycle; such a u != 0 exists iff {a : (0, a) in H} is a
    proper sublattice of Z^d.  ``index`` is the index of that sublattice
    (0 when it has lower rank).
    """
    basis = _integer_echelon(cycle_generators(driver))
    d = driver.d
    sub = [r[1:] for r in basis if r[0] == 0]
    if len(sub) < d:
        return LatticeVerdict(False, 0, basis)
    index = int(round(abs(np.linalg.det(np.array(sub[:d], dtype=float)))))
    return LatticeVerdict(index == 1, index, basis)


def _dual_witnesses(verdict: LatticeVerdict, d: int) -> list:
    """Nonzero u in [-pi, pi)^d annihilating the sublattice (candidates for unit eigenvalues)."""
    sub = [r[1:] for r in verdict.basis if r[0] == 0]
    if verdict.index == 0:
        # lower rank: pick u orthogonal to the span
        B = np.array(sub, dtype=float).reshape(-1, d)
        if B.size == 0:
            return [np.full(d, 0.5)]
        _, _, vt = np.linalg.svd(B)
        return [vt[-1] * 0.5]
    B = np.array(sub[:d], dtype=float)
    dual = 2 * np.pi * np.linalg.inv(B).T  # rows annihilate the sublattice mod 2pi
    out = []
    for row in dual:
        u = (row + np.pi) % (2 * np.pi) - np.pi
        if np.max(np.abs(u)) > 1e-9:
            out.append(u)
    return out


# decomposition

@dataclass
class SpectralData:
    driver: Driver
    grid: np.ndarray
    period: int
    peripheral: np.ndarray
    lam: np.ndarray
    projector: np.ndarray
    peripheral_projector: np.ndarray
    in_U: np.ndarray
    second_modulus: np.ndarray
    remainder_radius: float
    outside_radius: float
    aperiodic: bool
    lattice: LatticeVerdict
    gap: float = DEFAULT_GAP
    params: StableParams | None = None
    fit_residual: float = float("nan")
    phi0: float = float("nan")
    notes: list = field(default_factory=list)

    def norm_a(self, n):
        if self.params is None:
            raise SpectralError("stable parameters are not available")
        return norm_a(self.params, n)

    def norm_A(self, n: int) -> float:
        if self.params is None:
            raise SpectralError("stable parameters are not available")
        return norm_A(self.params, n)

    def hypothesis_residuals(self) -> dict:
        """Max residuals of the decomposition identities over the grid region U."""
        pts = np.argwhere(self.in_U)
        res = {"decomposition": 0.0, "pi_r": 0.0, "r_pi": 0.0, "pi_power": 0.0, "conjugate": 0.0}
        M = self.period
        for idx in map(tuple, pts):
            u = self.grid[idx]
            P = _twisted(self.driver, u)
            Pi = self.projector[idx]
            lam = self.lam[idx]
            R = P @ (np.eye(P.shape[0]) - self.peripheral_projector[idx])
            res["decomposition"] = max(res["decomposition"], np.abs(P - lam * Pi - R).max())
            res["pi_r"] = max(res["pi_r"], np.abs(Pi @ R).max())
            res["r_pi"] = max(res["r_pi"], np.abs(R @ Pi).max())
            res["pi_power"] = max(res["pi_power"], np.abs(np.linalg.matrix_power(Pi, M + 1) - Pi).max())
            jdx = _neg_index(idx, self.grid.shape[0])
            if self.in_U[jdx]:
                res["conjugate"] = max(res["conjugate"], abs(self.lam[jdx] - np.conj(lam)))
        return res

    def report(self) -> dict:
        return {
            "period": self.period,
            "aperiodic": self.aperiodic,
            "lattice_aperiodic": self.lattice.aperiodic,
            "remainder_radius": self.remainder_radius,
            "outside_radius": self.outside_radius,
            "theta": None if self.params is None else self.params.theta,
            "sigma": None if self.params is None else self.params.sigma.tolist(),
            "phi0": self.phi0,
            "fit_residual": self.fit_residual,
            "notes": list(self.notes),
        }


def _neg_index(idx: tuple, G: int) -> tuple:
    return tuple((G - k) % G for k in idx)


def _eig(P: np.ndarray):
    w, V = np.linalg.eig(P)
    Vinv = np.linalg.inv(V)
    return w, V, Vinv


def _track_order(G: int, d: int) -> list:
    """(index, predecessor) pairs walking outward from u = 0 along grid lines."""
    c = G // 2
    order = []
    line = [c] + [c + k for k in range(1, G - c)] + [c - k for k in range(1, c + 1)]
    prev1 = {c: None}
    for k in range(1, G - c):
        prev1[c + k] = c + k - 1
    for k in range(1, c + 1):
        prev1[c - k] = c - k + 1
    if d == 1:
        return [((i,), None if prev1[i] is None else (prev1[i],)) for i in line]
    for i in line:
        order.append(((i, c), None if prev1[i] is None else (prev1[i], c)))
    for i in line:
        for j in line[1:]:
            order.append(((i, j), (i, prev1[j])))
    return order


def decompose(driver: Driver, grid_size: int = 64, gap: float = DEFAULT_GAP, fit: bool = True) -> SpectralData:
    """Eigenstructure of P_u on a grid_size^d torus grid containing u = 0.

    The M peripheral eigenvalues xi^j of P_0 are tracked continuously from
    u = 0 by maximal eigenvector overlap between neighbouring grid points
    (ties go to the larger modulus).  Within U, where the tracked modulus
    exceeds every other eigenvalue modulus by ``gap``, lambda_u is the branch
    issued from 1 and Pi_u = sum_j xi^j Pi_{u,j}.  A grid point u != 0 with an
    eigenvalue of modulus >= 1 - 1e-9 marks the extension periodic.
    """
    if grid_size < 16 or grid_size % 2:
        raise SpectralError("grid_size must be even and at least 16")
    d = driver.d
    G = grid_size
    grid = torus_grid(G, d)
    S = driver.n_states
    shape = (G,) * d
    lam = np.full(shape, np.nan + 0j)
    proj = np.full(shape + (S, S), np.nan + 0j)
    pproj = np.full(shape + (S, S), np.nan + 0j)
    in_U = np.zeros(shape, dtype=bool)
    second = np.full(shape, np.nan)
    spec_radius = np.zeros(shape)

    w0, V0, _ = _eig(_twisted(driver, np.zeros(d)))
    periph = np.flatnonzero(np.abs(w0) >= 1 - UNIT_TOL)
    M = len(periph)
    xi = w0[periph]
    start = np.argmin(np.abs(xi - 1))
    # order the peripheral branches by angle so that branch j starts at xi^j
    ang = np.mod(np.angle(xi) - np.angle(xi[start]), 2 * np.pi)
    periph = periph[np.argsort(ang)]
    xi = w0[periph]

    vecs: dict = {}
    notes = []
    center = (G // 2,) * d
    max_off_origin = 0.0
    for idx, pred in _track_order(G, d):
        u = grid[idx]
        P = _twisted(driver, u)
        w, V, Vinv = _eig(P)
        spec_radius[idx] = np.abs(w).max()
        if idx != center:
            max_off_origin = max(max_off_origin, spec_radius[idx])
        if pred is None:
            chosen = list(periph)
        else:
            if pred not in vecs:
                continue
            prev = vecs[pred]
            chosen = []
            for v in prev.T:
                ov = np.abs(np.conj(V).T @ v) / (np.linalg.norm(V, axis=0) * np.linalg.norm(v))
                best = np.flatnonzero(ov >= ov.max() - 1e-12)
                k = int(best[np.argmax(np.abs(w[best]))])
                chosen.append(k)
            if len(set(chosen)) < len(chosen):
                continue
        others = np.delete(np.abs(w), chosen)
        sec = float(others.max()) if others.size else 0.0
        top = float(np.abs(w[chosen]).min())
        if top - sec <= gap:
            continue
        vecs[idx] = V[:, chosen]
        Pis = [np.outer(V[:, k], Vinv[k]) for k in chosen]
        lam[idx] = w[chosen[0]]
        proj[idx] = sum((xi[j] / xi[0]) * Pis[j] for j in range(M))
        pproj[idx] = sum(Pis)
        in_U[idx] = True
        second[idx] = sec

    outside = spec_radius[~in_U]
    outside_radius = float(outside.max()) if outside.size else 0.0
    remainder_radius = float(np.nanmax(second)) if in_U.any() else float("nan")
    verdict = lattice_aperiodicity(driver)
    aperiodic = max_off_origin < 1 - UNIT_TOL
    # the grid can miss unit eigenvalues; probe the dual points of the lattice criterion
    if aperiodic and not verdict.aperiodic:
        for u in _dual_witnesses(verdict, d):
            if np.abs(np.linalg.eigvals(_twisted(driver, u))).max() >= 1 - UNIT_TOL:
                aperiodic = False
                notes.append(f"unit eigenvalue at off-grid u={np.round(u, 6).tolist()}")
    if not aperiodic:
        notes.append("periodic extension")
    data = SpectralData(driver, grid, M, xi, lam, proj, pproj, in_U, second, remainder_radius,
                        outside_radius, aperiodic, verdict, gap, notes=notes)
    if fit and M == 1:
        params, resid = fit_stable_params(data)
        data.params = params
        data.fit_residual = resid
        data.phi0 = phi0(params)
        if resid > FIT_RESIDUAL_TOL:
            notes.append(f"poor stable fit (relative residual {resid:.2e})")
    return data


def dominant_eigenvalue(driver: Driver, u) -> complex:
    """Continuation of the eigenvalue 1 to small u (largest modulus)."""
    w = np.linalg.eigvals(_twisted(driver, np.atleast_1d(np.asarray(u, dtype=float))))
    return complex(w[np.argmax(np.abs(w))])


def fit_stable_params(sd: SpectralData, radius: float = 0.05, n_radii: int = 8) -> tuple:
    """Least-squares fit of -log lambda_u near u = 0 in the finite-variance regime.

    d=1: Re(-log lambda_u) = theta u^2 + c u^4 + ...; returns theta (zeta = 0).
    d=2: Re(-log lambda_u) = u^T Sigma u / 2 + quartic terms; theta = 1/2.
    Returns (StableParams, relative residual of the quadratic model).
    """
    drv = sd.driver
    d = drv.d
    rs = radius * np.arange(1, n_radii + 1) / n_radii
    if d == 1:
        dirs = [np.array([1.0])]
    else:
        dirs = [np.array(v, float) / np.linalg.norm(v) for v in ([1, 0], [0, 1], [1, 1], [1, -1], [2, 1], [1, 2])]
    us, ys = [], []
    for v in dirs:
        for r in rs:
            u = r * v
            us.append(u)
            ys.append(-np.log(dominant_eigenvalue(drv, u)).real)
    us = np.array(us)
    ys = np.array(ys)
    if d == 1:
        X = np.column_stack([us[:, 0] ** 2, us[:, 0] ** 4, us[:, 0] ** 6])
    else:
        a, b = us[:, 0], us[:, 1]
        X = np.column_stack([a * a, b * b, a * b, a**4, b**4, a * a * b * b, a**3 * b, a * b**3])
    coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
    quad = X[:, : (1 if d == 1 else 3)] @ coef[: (1 if d == 1 else 3)]
    resid = float(np.linalg.norm(ys - quad) / np.linalg.norm(ys))
    if d == 1:
        params = StableParams(alpha=2.0, theta=float(coef[0]), zeta=0.0, sigma=np.eye(1) * 2 * coef[0])
    else:
        sigma = np.array([[2 * coef[0], coef[2]], [coef[2], 2 * coef[1]]])
        params = StableParams(alpha=2.0, theta=0.5, zeta=0.0, sigma=sigma)
    return params, resid


def phi0(params: StableParams, tol: float = 1e-12) -> float:
    """Density at 0 of the limit law of S_n / a_n.

    d=2: 1 / (2 pi sqrt(det Sigma)).  d=1: (1/pi) int_0^inf exp(-theta u^alpha)
    cos(theta zeta u^alpha) du by adaptive quadrature.
    """
    if params.d == 2:
        return 1.0 / (2 * math.pi * math.sqrt(np.linalg.det(params.sigma)))
    th, z, a = params.theta, params.zeta, params.alpha

    def f(u):
        return math.exp(-th * u**a) * math.cos(th * z * u**a)

    val, _ = integrate.quad(f, 0, np.inf, epsabs=tol, epsrel=tol, limit=500)
    return val / math.pi


def limit_density(params: StableParams, x: np.ndarray) -> np.ndarray:
    """Density Phi of the limit law at points x (shape (..., d)); finite variance only."""
    if params.alpha != 2:
        raise SpectralError("limit_density is implemented for alpha = 2")
    x = np.asarray(x, dtype=float)
    if params.d == 1:
        var = 2 * params.theta
        return np.exp(-x[..., 0] ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    Sig = params.sigma
    Sinv = np.linalg.inv(Sig)
    q = np.einsum("...i,ij,...j->...", x, Sinv, x)
    return np.exp(-q / 2) / (2 * math.pi * math.sqrt(np.linalg.det(Sig)))


def norm_a(params: StableParams, n):
    """Positive solution of a^alpha = n L(a), by bisection (vectorised over n)."""
    n_arr = np.atleast_1d(np.asarray(n, dtype=float))
    L = params.slowly_varying
    a = params.alpha
    if L.kind == "constant":
        out = (n_arr * L.c) ** (1 / a)
    else:
        lo = np.full_like(n_arr, 1e-12)
        hi = np.maximum(2.0, (n_arr * np.log(n_arr + math.e) * 2) ** (1 / a) + 2)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f = mid**a - n_arr * L(mid)
            lo = np.where(f < 0, mid, lo)
            hi = np.where(f < 0, hi, mid)
        out = 0.5 * (lo + hi)
    return out if np.ndim(n) else float(out[0])


def norm_A(params: StableParams, n: int) -> float:
    """A_n = sqrt(sum_{k=1}^n a_k^(-d))."""
    k = np.arange(1, int(n) + 1)
    return math.sqrt(math.fsum(norm_a(params, k) ** (-params.d)))


def llt_check(driver: Driver, n: int, box_radius: int | None = None, params: StableParams | None = None) -> dict:
    """Max over |a| <= 2 a_n of a_n^d |mu(S_n = a) - Phi(a / a_n) / a_n^d|.

    Probabilities are exact (inverse characteristic function on a cyclic box
    large enough that wrapped mass is below 1e-15).
    """
    if params is None:
        params = fit_stable_params(decompose(driver, 16, fit=False))[0]
    an = norm_a(params, n)
    d = driver.d
    r = int(math.ceil(2 * an)) if box_radius is None else int(box_radius)
    dist, tail = distribution_at(driver, n, r)
    ax = np.arange(-r, r + 1)
    if d == 1:
        pts = ax[:, None]
    else:
        pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    mask = np.linalg.norm(pts, axis=-1) <= 2 * an
    dens = limit_density(params, pts / an) / an**d
    err = an**d * np.abs(dist - dens)
    return {
        "n": n,
        "a_n": an,
        "max_scaled_error": float(err[mask].max()),
        "p0": float(dist[(r,) * d]),
        "phi0_over_an": float(phi0(params) / an**d),
        "tail_bound": tail,
    }


def integrale_ratio(q: int, alpha: float, d: int, n: int) -> float:
    """sum over {l in {1..n}^q : sum l_j <= n} of prod l_j^(-d/alpha), divided by A_n^(2q).

    The simplex sum is the cumulative sum of the q-fold self-convolution of
    w_l = l^(-d/alpha), computed by FFT convolution.
    """
    if q not in (1, 2, 3):
        raise ValueError("q must be 1, 2 or 3")
    if not d <= alpha <= 2:
        raise ValueError("alpha must lie in [d, 2]")
    w = np.zeros(n + 1)
    w[1:] = np.arange(1, n + 1, dtype=float) ** (-d / alpha)
    A2 = math.fsum(w)
    if q == 1:
        return math.fsum(w) / A2
    conv = w
    for _ in range(q - 1):
        conv = signal.fftconvolve(conv, w)[: n + 1]
    return math.fsum(np.clip(conv, 0, None)) / A2**q


def integrale_limit(q: int, alpha: float, d: int) -> float:
    g = 1 - d / alpha
    return math.gamma(1 + g) ** q / math.gamma(1 + q * g)
