"""Lattice points, zero-sum observables on Z^d and stable-law parameter bundles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Point = tuple  # tuple[int, ...] of length d

ZERO_SUM_TOL = 1e-12


def as_point(p, d: int | None = None) -> Point:
    """Coerce an int or a sequence of ints to a lattice point tuple."""
    if isinstance(p, (int, np.integer)):
        coords = (int(p),)
    else:
        coords = tuple(int(c) for c in p)
    if len(coords) not in (1, 2):
        raise ValueError(f"lattice dimension must be 1 or 2, got {len(coords)}")
    if d is not None and len(coords) != d:
        raise ValueError(f"point {coords} does not have dimension {d}")
    return coords


def origin(d: int) -> Point:
    return (0,) * d


def norm(p: Sequence[int]) -> float:
    return math.sqrt(sum(c * c for c in p))


def neg(p: Point) -> Point:
    return tuple(-c for c in p)


def add(p: Point, q: Point) -> Point:
    return tuple(a + b for a, b in zip(p, q))


def sub(p: Point, q: Point) -> Point:
    return tuple(a - b for a, b in zip(p, q))


@dataclass(frozen=True)
class Observable:
    """Finitely supported function beta on Z^d.

    Use :meth:`from_mapping` to build one; it subtracts the mean over the
    support so that the weights sum to zero.
    """

    d: int
    points: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")
        if len(set(self.points)) != len(self.points):
            raise ValueError("support points must be pairwise distinct")
        for p in self.points:
            if len(p) != self.d:
                raise ValueError(f"point {p} does not have dimension {self.d}")

    @classmethod
    def from_mapping(cls, mapping: Mapping, d: int | None = None, center: bool = True) -> "Observable":
        items = [(as_point(p), float(w)) for p, w in mapping.items()]
        if d is None:
            if not items:
                raise ValueError("cannot infer dimension of an empty observable")
            d = len(items[0][0])
        pts = tuple(p for p, _ in items)
        w = np.array([w for _, w in items], dtype=float)
        if center and len(w):
            if len(w) == 1 and w[0] != 0.0:
                raise ValueError("a single-point support cannot carry a zero-sum observable")
            w = w - w.mean()
        return cls(d, pts, tuple(float(x) for x in w))

    @classmethod
    def zero(cls, d: int) -> "Observable":
        return cls(d, (), ())

    def __call__(self, p) -> float:
        return self.as_dict().get(as_point(p, self.d), 0.0)

    def as_dict(self) -> dict:
        return dict(zip(self.points, self.weights))

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    def scaled(self, c: float) -> "Observable":
        return Observable(self.d, self.points, tuple(c * w for w in self.weights))

    def differences(self) -> list:
        """Sorted set of differences a - b over pairs of support points."""
        return sorted({sub(a, b) for a in self.points for b in self.points})

    def to_json(self) -> dict:
        return {"d": self.d, "support": [[list(p), w] for p, w in zip(self.points, self.weights)]}

    @classmethod
    def from_json(cls, data: Mapping, center: bool = True) -> "Observable":
        d = int(data["d"])
        mapping = {}
        for entry in data["support"]:
            p, w = entry
            mapping[as_point(p, d)] = w
        return cls.from_mapping(mapping, d=d, center=center)


def make_fp(p) -> Observable:
    """The observable 1_{p} - 1_{0}."""
    p = as_point(p)
    if all(c == 0 for c in p):
        raise ValueError("make_fp requires p != 0")
    return Observable(len(p), (p, origin(len(p))), (1.0, -1.0))


@dataclass(frozen=True)
class ObservableReport:
    zero_sum_residual: float
    weighted_norm: float

    @property
    def accepted(self) -> bool:
        return self.zero_sum_residual <= ZERO_SUM_TOL


def validate_observable(obs: Observable, alpha: float, d: int, eps: float) -> ObservableReport:
    """Zero-sum residual and the weighted norm sum |p|^((alpha-d)/2+eps) |beta(p)|."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    expo = (alpha - d) / 2 + eps
    terms = [norm(p) ** expo * abs(w) for p, w in zip(obs.points, obs.weights)]
    return ObservableReport(abs(obs.total), math.fsum(terms))


@dataclass(frozen=True)
class SlowlyVarying:
    """Built-in slowly varying functions: a constant, or log(max(x, e))."""

    kind: str = "constant"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "log"):
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if self.kind == "constant" and self.c <= 0:
            raise ValueError("constant slowly varying function must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.full_like(x, self.c)
        else:
            out = np.log(np.maximum(x, math.e))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class StableParams:
    alpha: float
    theta: float
    zeta: float = 0.0
    sigma: np.ndarray = field(default_factory=lambda: np.eye(1))
    slowly_varying: SlowlyVarying = field(default_factory=SlowlyVarying)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", sigma)
        d = sigma.shape[0]
        if sigma.shape != (d, d) or d not in (1, 2):
            raise ValueError("sigma must be a 1x1 or 2x2 matrix")
        if not (d <= self.alpha <= 2):
            raise ValueError(f"alpha={self.alpha} outside [{d}, 2]")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ValueError("sigma must be symmetric")
        if np.linalg.det(sigma) <= 0 or np.any(np.linalg.eigvalsh(sigma) <= 0):
            raise ValueError("sigma must be positive definite")
        if d == 2 and self.zeta != 0:
            raise ValueError("zeta must vanish in dimension 2")
        if self.alpha > 1 and abs(self.zeta) > abs(math.tan(math.pi * self.alpha / 2)) + 1e-12:
            raise ValueError("|zeta| exceeds |tan(pi alpha / 2)|")

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @property
    def gamma(self) -> float:
        """Mittag-Leffler index 1 - d/alpha of the limit law."""
        return 1.0 - self.d / self.alpha

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "theta": self.theta,
            "zeta": self.zeta,
            "sigma": self.sigma.tolist(),
            "slowly_varying": {"kind": self.slowly_varying.kind, "c": self.slowly_varying.c},
        }


def support_points(observables: Iterable[Observable]) -> list:
    pts = set()
    for obs in observables:
        pts.update(obs.points)
    return sorted(pts)
