"""Constraint domains and direction fields for the extended Skorokhod problem.

Three families are supported:

* the half-line [0, inf) with normal reflection at 0,
* the nonnegative orthant R_+^J with the weighted direction field of the
  processor-sharing family (face i pushes along d_i with (d_i)_i = 1 and
  (d_i)_j = -alpha_j / (1 - alpha_i)),
* two-dimensional valley domains between the curves x = -c_L y^{a_L} and
  x = c_R y^{a_R}, with horizontal reflection on the lateral boundaries.

For the orthant and valley families the vertex (origin) carries the closed
convex cone generated by all face directions together with the interior
vector v = (1, ..., 1) (orthant) or (0, 1) (valley); this is the unique
choice that keeps the summed coordinate process a one-dimensional reflected
path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import CapacityError, DomainError

__all__ = [
    "GpsWeights",
    "ValleyDomain",
    "DirectionCone",
    "gps_directions",
    "HalfLine",
    "GpsOrthant",
    "ValleyEsp",
    "MEMBERSHIP_TOL",
    "MAX_ACTIVE_SET_DIM",
]

# Absolute tolerance for domain-membership checks.
MEMBERSHIP_TOL = 1e-9

# Active sets are enumerated exhaustively (2^J subsets); reject beyond this.
MAX_ACTIVE_SET_DIM = 12


@dataclass(frozen=True)
class GpsWeights:
    """Weight vector alpha: positive entries summing to 1, J >= 2."""

    alpha: tuple[float, ...]

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(np.asarray(self.alpha, dtype=np.float64)))
        object.__setattr__(self, "alpha", alpha)
        if len(alpha) < 2:
            raise DomainError("weight vector needs J >= 2 components")
        if any(a <= 0 for a in alpha):
            raise DomainError(f"weights must be strictly positive, got {alpha}")
        if abs(sum(alpha) - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to 1 within 1e-12, got sum={sum(alpha)!r}")

    @property
    def dim(self) -> int:
        return len(self.alpha)

    def as_array(self) -> NDArray[np.float64]:
        return np.asarray(self.alpha, dtype=np.float64)


@dataclass(frozen=True)
class ValleyDomain:
    """Parameters of G = {(x, y): y >= 0, -c_L y^{a_L} <= x <= c_R y^{a_R}}."""

    alpha_l: float
    alpha_r: float
    c_l: float
    c_r: float

    def __post_init__(self):
        for name in ("alpha_l", "alpha_r", "c_l", "c_r"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if v <= 0:
                raise DomainError(f"{name} must be strictly positive, got {v}")

    def left(self, y):
        """Lower lateral curve L(y) = -c_L y^{a_L}, vectorized over y >= 0."""
        return -self.c_l * np.power(y, self.alpha_l)

    def right(self, y):
        """Upper lateral curve R(y) = c_R y^{a_R}."""
        return self.c_r * np.power(y, self.alpha_r)


@dataclass(frozen=True)
class DirectionCone:
    """Generators of the reflection cone at a boundary point.

    Face generators follow the (d_i)_i = 1 normalization; `vertex_flag`
    marks the cone at the origin, which additionally contains v.
    """

    generators: tuple[tuple[float, ...], ...]
    vertex_flag: bool = False

    def as_matrix(self) -> NDArray[np.float64]:
        return np.asarray(self.generators, dtype=np.float64)


def gps_directions(weights: GpsWeights) -> list[NDArray[np.float64]]:
    """Face directions d_1..d_J: (d_i)_i = 1, (d_i)_j = -alpha_j/(1 - alpha_i).

    Every d_i is orthogonal to v = (1, ..., 1).
    """
    alpha = weights.as_array()
    j = weights.dim
    d = np.empty((j, j), dtype=np.float64)
    for i in range(j):
        d[i] = -alpha / (1.0 - alpha[i])
        d[i, i] = 1.0
    return [d[i].copy() for i in range(j)]


def _spec_hash(kind: str, params: dict) -> str:
    blob = json.dumps({"kind": kind, **params}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class HalfLine:
    """G = [0, inf), d(0) = R_+."""

    @property
    def dim(self) -> int:
        return 1

    @property
    def kind(self) -> str:
        return "half-line"

    def contains(self, x, tol: float = MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=np.float64)
        return np.all(x >= -tol, axis=-1)

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.abs(x[..., 0])

    def describe(self) -> dict:
        return {"kind": self.kind}

    def spec_hash(self) -> str:
        return _spec_hash(self.kind, {})


@dataclass(frozen=True)
class GpsOrthant:
    """G = R_+^J with the weighted face directions; V = {0}."""

    weights: GpsWeights

    @property
    def dim(self) -> int:
        return self.weights.dim

    @property
    def kind(self) -> str:
        return "gps"

    def __post_init__(self):
        if self.weights.dim > MAX_ACTIVE_SET_DIM:
            raise CapacityError(
                f"active-set enumeration supports J <= {MAX_ACTIVE_SET_DIM}, got J={self.weights.dim}"
            )

    def contains(self, x, tol: float = MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=np.float64)
        return np.all(x >= -tol, axis=-1)

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.min(x, axis=-1)

    def direction_cone(self, x, tol: float = MEMBERSHIP_TOL) -> DirectionCone:
        """Cone d(x): face directions for the touching faces; {v, d_1..d_J} at 0."""
        x = np.asarray(x, dtype=np.float64)
        if not self.contains(x, tol):
            raise DomainError(f"point {x} lies outside the orthant")
        dirs = gps_directions(self.weights)
        if np.all(x <= tol):
            gens = [np.ones(self.dim)] + dirs
            return DirectionCone(tuple(tuple(g) for g in gens), vertex_flag=True)
        active = [dirs[i] for i in range(self.dim) if x[i] <= tol]
        return DirectionCone(tuple(tuple(g) for g in active), vertex_flag=False)

    def describe(self) -> dict:
        return {"kind": self.kind, "alpha": list(self.weights.alpha)}

    def spec_hash(self) -> str:
        return _spec_hash(self.kind, {"alpha": list(self.weights.alpha)})


@dataclass(frozen=True)
class ValleyEsp:
    """Valley domain with horizontal lateral reflection; V = {(0, 0)}."""

    domain: ValleyDomain

    @property
    def dim(self) -> int:
        return 2

    @property
    def kind(self) -> str:
        return "valley"

    def contains(self, x, tol: float = MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=np.float64)
        y = x[..., 1]
        y_ok = y >= -tol
        yc = np.maximum(y, 0.0)
        return y_ok & (x[..., 0] >= self.domain.left(yc) - tol) & (
            x[..., 0] <= self.domain.right(yc) + tol
        )

    def boundary_distance(self, x):
        """Euclidean distance to the lateral curves (the origin lies on both).

        Minimizes over the curve parameter by bracketed grid search with
        refinement; accurate to ~1e-6 of the local scale.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        pts = np.atleast_2d(x)
        d_left = _curve_distance(pts, self.domain.c_l, self.domain.alpha_l, sign=-1.0)
        d_right = _curve_distance(pts, self.domain.c_r, self.domain.alpha_r, sign=1.0)
        out = np.minimum(d_left, d_right)
        return out[0] if squeeze else out

    def describe(self) -> dict:
        d = self.domain
        return {
            "kind": self.kind,
            "alpha_l": d.alpha_l,
            "alpha_r": d.alpha_r,
            "c_l": d.c_l,
            "c_r": d.c_r,
        }

    def spec_hash(self) -> str:
        return _spec_hash(self.kind, self.describe())


def _curve_distance(pts: np.ndarray, c: float, alpha: float, sign: float) -> np.ndarray:
    """Distance from (x0, y0) points to the curve {(sign*c*y^alpha, y): y >= 0}."""
    x0, y0 = pts[:, 0], pts[:, 1]
    # Distance is bounded by the horizontal gap at y0 (or by |p| via the origin),
    # so the minimizing y lies within that radius of y0.
    yc = np.maximum(y0, 0.0)
    bound = np.minimum(np.abs(sign * c * np.power(yc, alpha) - x0), np.hypot(x0, y0))
    lo = np.maximum(y0 - bound, 0.0)
    hi = y0 + bound
    for _ in range(4):
        grid = np.linspace(0.0, 1.0, 33)
        ys = lo[:, None] + (hi - lo)[:, None] * grid[None, :]
        d2 = (sign * c * np.power(ys, alpha) - x0[:, None]) ** 2 + (ys - y0[:, None]) ** 2
        k = np.argmin(d2, axis=1)
        step = (hi - lo) / 32.0
        best = ys[np.arange(len(ys)), k]
        lo = np.maximum(best - step, 0.0)
        hi = best + step
    return np.sqrt(d2[np.arange(len(d2)), k])
