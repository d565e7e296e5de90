"""Euler simulation of reflected stochastic differential equations.

A driving Brownian path is folded through drift/dispersion evaluators into
the unconstrained driver X, and the constraint is applied after each full
Euler increment:

    dX_k = b(Z_k) dt + sigma(Z_k) dB_k,   Z_{k+1} = constrain(Z_k, dX_k).

X is accumulated from exactly the increments fed to the constraint, and the
push process is stored as Y = Z - X, so Z - X - Y vanishes identically in
floating point.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .domains import MEMBERSHIP_TOL, GpsOrthant, HalfLine, ValleyEsp
from .errors import CoefficientBoundError, DomainError, GridError
from .maps import GpsBatchSolver, gamma1_values, xi_values
from .paths import Path, uniform_grid

__all__ = [
    "CoefficientField",
    "driftless_identity",
    "constant_drift",
    "linear_drift",
    "constant_coefficients",
    "SderSpec",
    "EulerConfig",
    "PathBundle",
    "brownian_path",
    "euler_sder",
    "euler_sder_from_increments",
    "occupation_fraction",
    "hitting_time",
    "exit_index",
    "truncate_at_exit",
    "path_rng",
    "make_constraint_state",
]


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientField:
    """Drift b and dispersion sigma as batch evaluators.

    ``drift`` maps (P, J) states to (P, J) vectors; ``dispersion`` maps
    (P, J) states to (P, J, N) matrices.  Evaluators must be pure functions
    of the state; every evaluation is checked against ``bound``.
    ``state_dependent = False`` marks coefficient pairs that ignore the
    state, enabling a vectorized driver.
    """

    label: str
    drift: Callable[[np.ndarray], np.ndarray]
    dispersion: Callable[[np.ndarray], np.ndarray]
    noise_dim: int
    state_dependent: bool = True
    bound: float = 1e6
    params: dict = field(default_factory=dict, compare=False)

    def evaluate(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b = np.asarray(self.drift(z), dtype=np.float64)
        s = np.asarray(self.dispersion(z), dtype=np.float64)
        if np.max(np.abs(b), initial=0.0) > self.bound:
            raise CoefficientBoundError(f"|b| exceeded bound {self.bound}")
        if np.max(np.abs(s), initial=0.0) > self.bound:
            raise CoefficientBoundError(f"|sigma| exceeded bound {self.bound}")
        return b, s

    def describe(self) -> dict:
        return {"label": self.label, "noise_dim": self.noise_dim, **self.params}


class _ZeroDrift:
    def __call__(self, z):
        return np.zeros_like(z)


class _ConstantVector:
    def __init__(self, vec):
        self.vec = np.asarray(vec, dtype=np.float64)

    def __call__(self, z):
        return np.broadcast_to(self.vec, z.shape)


class _ConstantMatrix:
    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=np.float64)

    def __call__(self, z):
        return np.broadcast_to(self.mat, (z.shape[0],) + self.mat.shape)


class _LinearDrift:
    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=np.float64)

    def __call__(self, z):
        return z @ self.mat.T


def driftless_identity(dim: int) -> CoefficientField:
    """b = 0, sigma = identity."""
    return CoefficientField(
        label="driftless-identity",
        drift=_ZeroDrift(),
        dispersion=_ConstantMatrix(np.eye(dim)),
        noise_dim=dim,
        state_dependent=False,
    )


def constant_drift(vector) -> CoefficientField:
    """b = constant vector, sigma = identity."""
    vec = np.asarray(vector, dtype=np.float64)
    dim = vec.shape[0]
    return CoefficientField(
        label="constant-drift",
        drift=_ConstantVector(vec),
        dispersion=_ConstantMatrix(np.eye(dim)),
        noise_dim=dim,
        state_dependent=False,
        params={"drift": vec.tolist()},
    )


def linear_drift(matrix) -> CoefficientField:
    """b(z) = A z, sigma = identity."""
    mat = np.asarray(matrix, dtype=np.float64)
    dim = mat.shape[0]
    if mat.shape != (dim, dim):
        raise DomainError(f"drift matrix must be square, got {mat.shape}")
    return CoefficientField(
        label="linear-drift",
        drift=_LinearDrift(mat),
        dispersion=_ConstantMatrix(np.eye(dim)),
        noise_dim=dim,
        state_dependent=True,
        params={"matrix": mat.tolist()},
    )


def constant_coefficients(drift_vector, sigma_matrix) -> CoefficientField:
    """Arbitrary constant (b, sigma) pair; covers degenerate sigma = 0."""
    vec = np.asarray(drift_vector, dtype=np.float64)
    sig = np.asarray(sigma_matrix, dtype=np.float64)
    if sig.ndim != 2 or sig.shape[0] != vec.shape[0]:
        raise DomainError(f"sigma must be (J, N) with J = {vec.shape[0]}, got {sig.shape}")
    return CoefficientField(
        label="constant",
        drift=_ConstantVector(vec),
        dispersion=_ConstantMatrix(sig),
        noise_dim=sig.shape[1],
        state_dependent=False,
        params={"drift": vec.tolist(), "sigma": sig.tolist()},
    )


# ---------------------------------------------------------------------------
# spec / config / bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SderSpec:
    """Domain + direction field, coefficients, and initial condition."""

    esp: HalfLine | GpsOrthant | ValleyEsp
    coefficients: CoefficientField
    initial: tuple[float, ...]

    def __post_init__(self):
        initial = tuple(float(v) for v in np.atleast_1d(self.initial))
        object.__setattr__(self, "initial", initial)
        if len(initial) != self.esp.dim:
            raise DomainError(
                f"initial point has dim {len(initial)}, domain has dim {self.esp.dim}"
            )
        if not self.esp.contains(np.asarray(initial)):
            raise DomainError(f"initial point {initial} lies outside the domain")

    @property
    def dim(self) -> int:
        return self.esp.dim

    @property
    def noise_dim(self) -> int:
        return self.coefficients.noise_dim

    def describe(self) -> dict:
        return {
            "esp": self.esp.describe(),
            "coefficients": self.coefficients.describe(),
            "initial": list(self.initial),
        }

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class EulerConfig:
    """Horizon, power-of-two step count, and seed for one simulation."""

    horizon: float
    steps: int
    seed: int
    scheme: str = "euler-maruyama-reflected"

    def __post_init__(self):
        if self.horizon <= 0:
            raise GridError(f"horizon must be positive, got {self.horizon}")
        if self.steps < 2 or self.steps & (self.steps - 1):
            raise GridError(f"steps must be a power of two >= 2, got {self.steps}")

    def grid(self) -> NDArray[np.float64]:
        return uniform_grid(self.horizon, self.steps)


@dataclass(frozen=True)
class PathBundle:
    """Driving noise B, driver X, constrained path Z, and push Y = Z - X."""

    b: Path
    x: Path
    z: Path
    y: Path
    spec: SderSpec
    seed: int | None = None

    def __post_init__(self):
        for p in (self.x, self.z, self.y):
            if not np.array_equal(p.times, self.b.times):
                raise GridError("bundle components must share one grid")
        if np.any(self.z.values - self.x.values - self.y.values != 0.0):
            raise GridError("Z - X - Y must vanish exactly")
        # borderline initials (within the membership tolerance but outside G)
        # are projected at t = 0, so Y(0) and Z(0) carry that same slack
        if np.any(np.abs(self.y.values[0]) > MEMBERSHIP_TOL):
            raise GridError("Y(0) must be zero")
        initial = np.asarray(self.spec.initial)
        if np.any(self.x.values[0] != initial):
            raise DomainError("X(0) must equal the initial condition")
        if np.any(np.abs(self.z.values[0] - initial) > MEMBERSHIP_TOL):
            raise DomainError("Z(0) must equal the initial condition")
        if not np.all(self.spec.esp.contains(self.z.values)):
            raise DomainError("Z leaves the domain")


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def brownian_path(seed: int, dim: int, grid: NDArray[np.float64]) -> Path:
    """Sampled Brownian motion started at 0: independent N(0, dt) increments.

    Identical seeds produce bitwise identical paths.
    """
    grid = np.asarray(grid, dtype=np.float64)
    rng = np.random.default_rng(int(seed))
    n = grid.shape[0] - 1
    values = np.zeros((n + 1, dim))
    if n > 0:
        sqrt_dt = np.sqrt(np.diff(grid))
        increments = rng.standard_normal((n, dim)) * sqrt_dt[:, None]
        np.cumsum(increments, axis=0, out=values[1:])
    return Path(grid, values)


def path_rng(master_seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Per-path generator from (master seed, stream, path index) splitting."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(master_seed), int(stream), int(path_index)))
    )


# ---------------------------------------------------------------------------
# constraint states (vectorized over a batch of paths)
# ---------------------------------------------------------------------------


class _HalfLineState:
    def __init__(self, x0: np.ndarray):
        self.x = x0.astype(np.float64).copy()
        self.run_min = self.x.copy()

    def current(self) -> np.ndarray:
        return self.x + np.maximum(0.0, -self.run_min)

    def advance(self, dx: np.ndarray) -> np.ndarray:
        self.x += dx
        np.minimum(self.run_min, self.x, out=self.run_min)
        return self.x + np.maximum(0.0, -self.run_min)

    def compress(self, keep: np.ndarray) -> None:
        self.x = self.x[keep]
        self.run_min = self.run_min[keep]


class _GpsState:
    def __init__(self, z0: np.ndarray, solver: GpsBatchSolver):
        self.z = z0.astype(np.float64).copy()
        self.solver = solver

    def current(self) -> np.ndarray:
        return self.z

    def advance(self, dx: np.ndarray) -> np.ndarray:
        self.z, _ = self.solver.step(self.z, dx)
        return self.z

    def compress(self, keep: np.ndarray) -> None:
        self.z = self.z[keep]


class _ValleyState:
    def __init__(self, x0: np.ndarray, domain):
        self.domain = domain
        self.x1 = x0[:, 0].astype(np.float64).copy()
        self.x2 = x0[:, 1].astype(np.float64).copy()
        self.run_min2 = self.x2.copy()
        z2 = self._z2()
        a = self.x1 - domain.left(z2)
        b = self.x1 - domain.right(z2)
        self.low = np.minimum(0.0, a)
        self.high = np.minimum(b, a)

    def _z2(self) -> np.ndarray:
        return self.x2 + np.maximum(0.0, -self.run_min2)

    def current(self) -> np.ndarray:
        z2 = self._z2()
        xi = np.maximum(self.low, self.high)
        return np.column_stack([self.x1 - xi, z2])

    def advance(self, dx: np.ndarray) -> np.ndarray:
        self.x1 += dx[:, 0]
        self.x2 += dx[:, 1]
        np.minimum(self.run_min2, self.x2, out=self.run_min2)
        z2 = self._z2()
        a = self.x1 - self.domain.left(z2)
        b = self.x1 - self.domain.right(z2)
        np.minimum(self.low, a, out=self.low)
        self.high = np.minimum(np.maximum(self.high, b), a)
        xi = np.maximum(self.low, self.high)
        return np.column_stack([self.x1 - xi, z2])

    def compress(self, keep: np.ndarray) -> None:
        for name in ("x1", "x2", "run_min2", "low", "high"):
            setattr(self, name, getattr(self, name)[keep])


def make_constraint_state(esp, z0: np.ndarray):
    """Per-step constraint state for a (P, J) batch of starting points."""
    z0 = np.atleast_2d(np.asarray(z0, dtype=np.float64))
    if not np.all(esp.contains(z0)):
        raise DomainError("starting points must lie in the domain")
    if isinstance(esp, HalfLine):
        return _HalfLineState(z0)
    if isinstance(esp, GpsOrthant):
        return _GpsState(z0, GpsBatchSolver(esp.weights))
    if isinstance(esp, ValleyEsp):
        return _ValleyState(z0, esp.domain)
    raise DomainError(f"unsupported domain {esp!r}")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def euler_sder(spec: SderSpec, config: EulerConfig) -> PathBundle:
    """Simulate one bundle (B, X, Z, Y) on the configured dyadic grid."""
    grid = config.grid()
    noise = brownian_path(config.seed, spec.noise_dim, grid)
    return euler_sder_from_increments(
        spec, grid, np.diff(noise.values, axis=0), noise=noise, seed=config.seed
    )


def euler_sder_from_increments(
    spec: SderSpec,
    grid: NDArray[np.float64],
    db: NDArray[np.float64],
    noise: Path | None = None,
    seed: int | None = None,
) -> PathBundle:
    """Fold given noise increments (steps, N) through the SDER scheme."""
    grid = np.asarray(grid, dtype=np.float64)
    db = np.asarray(db, dtype=np.float64)
    n = grid.shape[0] - 1
    if db.shape != (n, spec.noise_dim):
        raise GridError(f"expected increments of shape {(n, spec.noise_dim)}, got {db.shape}")
    if noise is None:
        values = np.zeros((n + 1, spec.noise_dim))
        np.cumsum(db, axis=0, out=values[1:])
        noise = Path(grid, values)
    initial = np.asarray(spec.initial)
    dt = np.diff(grid)

    if spec.coefficients.state_dependent:
        x, z = _fold_state_dependent(spec, dt, db, initial)
    else:
        bvec, sigma = spec.coefficients.evaluate(initial[None, :])
        dx = bvec[0][None, :] * dt[:, None] + db @ sigma[0].T
        x = np.empty((n + 1, spec.dim))
        x[0] = initial
        np.cumsum(dx, axis=0, out=x[1:])
        x[1:] += initial
        z = _constrain_full(spec.esp, x)

    x_path = Path(grid, x)
    z_path = Path(grid, z)
    y_path = Path(grid, z - x)
    return PathBundle(b=noise, x=x_path, z=z_path, y=y_path, spec=spec, seed=seed)


def _constrain_full(esp, x: np.ndarray) -> np.ndarray:
    """Apply the pathwise constraint map to a precomputed driver path."""
    if isinstance(esp, HalfLine):
        return gamma1_values(x[:, 0])[:, None]
    if isinstance(esp, ValleyEsp):
        z2 = gamma1_values(x[:, 1])
        ell = esp.domain.left(z2)
        r = esp.domain.right(z2)
        z1 = x[:, 0] - xi_values(x[:, 0], ell, r)
        return np.column_stack([z1, z2])
    if isinstance(esp, GpsOrthant):
        solver = GpsBatchSolver(esp.weights)
        z = np.empty_like(x)
        z[0] = x[0]
        state = x[0][None, :].copy()
        for k in range(1, x.shape[0]):
            state, _ = solver.step(state, (x[k] - x[k - 1])[None, :])
            z[k] = state[0]
        return z
    raise DomainError(f"unsupported domain {esp!r}")


def _fold_state_dependent(spec, dt, db, initial):
    n = db.shape[0]
    x = np.empty((n + 1, spec.dim))
    z = np.empty((n + 1, spec.dim))
    x[0] = initial
    state = make_constraint_state(spec.esp, initial[None, :])
    z[0] = state.current()[0]
    for k in range(n):
        bvec, sigma = spec.coefficients.evaluate(z[k][None, :])
        dx = bvec[0] * dt[k] + sigma[0] @ db[k]
        x[k + 1] = x[k] + dx
        z[k + 1] = state.advance(dx[None, :])[0]
    return x, z


# ---------------------------------------------------------------------------
# path functionals
# ---------------------------------------------------------------------------


def occupation_fraction(z: Path, esp, boundary_tol: float) -> float:
    """Time-weighted fraction of grid intervals starting within boundary_tol
    of the boundary."""
    if z.n_points < 2:
        return 0.0
    dist = esp.boundary_distance(z.values)
    dt = np.diff(z.times)
    total = z.times[-1] - z.times[0]
    return float(dt[dist[:-1] <= boundary_tol].sum() / total)


def hitting_time(z: Path, level: float) -> float | None:
    """First grid time at which the summed coordinate crosses the level.

    Crossings between grid points are bracketed by sign change and snapped
    to the nearer endpoint.  Returns None if the level is never reached.
    """
    if level < 0:
        raise DomainError(f"level must be nonnegative, got {level}")
    obs = z.values.sum(axis=1) if z.dim > 1 else z.values[:, 0]
    f = obs - level
    if f[0] == 0.0:
        return float(z.times[0])
    sign_change = np.flatnonzero((f[:-1] * f[1:] <= 0.0))
    if sign_change.size == 0:
        return None
    k = int(sign_change[0])
    if f[k + 1] == 0.0:
        return float(z.times[k + 1])
    t0, t1 = z.times[k], z.times[k + 1]
    t_star = t0 + (t1 - t0) * f[k] / (f[k] - f[k + 1])
    return float(t0 if abs(t_star - t0) <= abs(t1 - t_star) else t1)


def exit_index(z: Path, radius: float) -> int | None:
    """First grid index with |Z| >= radius (the localization time zeta^m)."""
    norms = np.linalg.norm(z.values, axis=1)
    hits = np.flatnonzero(norms >= radius)
    return int(hits[0]) if hits.size else None


def truncate_at_exit(bundle: PathBundle, radius: float) -> PathBundle:
    """Bundle prefix up to and including the first exit from |z| < radius."""
    k = exit_index(bundle.z, radius)
    n = bundle.z.n_points if k is None else k + 1
    return PathBundle(
        b=bundle.b.prefix(n),
        x=bundle.x.prefix(n),
        z=bundle.z.prefix(n),
        y=bundle.y.prefix(n),
        spec=bundle.spec,
        seed=bundle.seed,
    )
