"""Deterministic path-to-path constrained maps.

The building blocks:

* ``sm_one_dim`` — the one-dimensional reflection map on the half-line,
  phi(t) = psi(t) + max(0, sup_{s<=t} -psi(s)), evaluated at grid points.
* ``xi_map`` — the constraining term of the two-sided map with
  time-dependent barriers ell(t) <= r(t),

      Xi(t) = max( 0 ^ inf_{u<=t}(psi - ell)(u),
                   sup_{s<=t}[ (psi - r)(s) ^ inf_{s<=u<=t}(psi - ell)(u) ] ).

  Both a literal O(n^2) evaluation and a streaming O(n) evaluator are
  provided; the streaming form uses the recursion

      m_k = min(m_{k-1}, a_k),   M_k = min(max(M_{k-1}, b_k), a_k),
      Xi_k = max(m_k, M_k),

  with a = psi - ell and b = psi - r, which follows from distributing the
  running max over the pairwise min.
* ``valley_esm`` / ``gps_esm_2d_exact`` — exact two-dimensional solvers
  built by composing the two maps above (the orthant case via the rotation
  w = x1 - x2, h = x1 + x2).
* ``gps_step_solver`` / ``gps_esm_discrete`` — a per-step complementarity
  scheme for the orthant family in any dimension J >= 2.  Stage 1 projects
  along v = (1,...,1) so that <v, Z> reproduces the one-dimensional map
  exactly; stage 2 resolves the faces by enumerating active sets.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .domains import (
    MEMBERSHIP_TOL,
    GpsWeights,
    gps_directions,
)
from .errors import DomainError, GridError, IntervalError, UnsolvableStepError
from .paths import Path

__all__ = [
    "sm_one_dim",
    "sm_one_dim_reference",
    "xi_map",
    "xi_map_reference",
    "valley_esm",
    "gps_esm_2d_exact",
    "gps_step_solver",
    "gps_esm_discrete",
    "GpsBatchSolver",
    "gamma1_values",
    "xi_values",
]


# ---------------------------------------------------------------------------
# one-dimensional map
# ---------------------------------------------------------------------------


def gamma1_values(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Constrained values of the 1-D map applied to a sampled array."""
    running_min = np.minimum.accumulate(values)
    return values + np.maximum(0.0, -running_min)


def sm_one_dim(psi: Path) -> tuple[Path, Path]:
    """One-dimensional reflection on [0, inf): returns (phi, eta).

    eta is nondecreasing, starts at 0, and increases only at grid points
    where phi = 0.
    """
    values = psi.scalar()
    if values[0] < -MEMBERSHIP_TOL:
        raise DomainError(f"psi(0) = {values[0]} lies outside [0, inf)")
    eta = np.maximum(0.0, -np.minimum.accumulate(values))
    phi = values + eta
    return Path(psi.times, phi), Path(psi.times, eta)


def sm_one_dim_reference(psi: Path) -> tuple[Path, Path]:
    """Literal O(n^2) evaluation of phi(t) = psi(t) + max(0, max_{s<=t} -psi(s))."""
    values = psi.scalar()
    if values[0] < -MEMBERSHIP_TOL:
        raise DomainError(f"psi(0) = {values[0]} lies outside [0, inf)")
    n = values.shape[0]
    phi = np.empty(n)
    for k in range(n):
        phi[k] = values[k] + max(0.0, np.max(-values[: k + 1]))
    return Path(psi.times, phi), Path(psi.times, phi - values)


# ---------------------------------------------------------------------------
# two-sided map with time-dependent barriers
# ---------------------------------------------------------------------------


def _check_barriers(psi, ell, r):
    if np.any(ell > r):
        k = int(np.argmax(ell > r))
        raise IntervalError(f"ell > r at grid index {k}: {ell[k]} > {r[k]}")
    if not (ell[0] - MEMBERSHIP_TOL <= psi[0] <= r[0] + MEMBERSHIP_TOL):
        raise IntervalError(
            f"psi(0) = {psi[0]} outside initial interval [{ell[0]}, {r[0]}]"
        )


def xi_values(psi, ell, r) -> NDArray[np.float64]:
    """Streaming evaluation of the two-sided constraining term (single pass)."""
    a = psi - ell
    b = psi - r
    m = np.minimum(0.0, np.minimum.accumulate(a))
    big = np.empty_like(a)
    acc = min(b[0], a[0])
    big[0] = acc
    for k in range(1, a.shape[0]):
        acc = min(max(acc, b[k]), a[k])
        big[k] = acc
    return np.maximum(m, big)


def xi_map(psi: Path, ell: Path, r: Path) -> Path:
    """Constraining term Xi of the two-sided map; psi - Xi stays in [ell, r]."""
    pv, lv, rv = psi.scalar(), ell.scalar(), r.scalar()
    if not (np.array_equal(psi.times, ell.times) and np.array_equal(psi.times, r.times)):
        raise GridError("psi, ell, r must share one time grid")
    _check_barriers(pv, lv, rv)
    return Path(psi.times, xi_values(pv, lv, rv))


def xi_map_reference(psi: Path, ell: Path, r: Path) -> Path:
    """Literal O(n^2) evaluation of the double max/min formula."""
    pv, lv, rv = psi.scalar(), ell.scalar(), r.scalar()
    if not (np.array_equal(psi.times, ell.times) and np.array_equal(psi.times, r.times)):
        raise GridError("psi, ell, r must share one time grid")
    _check_barriers(pv, lv, rv)
    a = pv - lv
    b = pv - rv
    n = a.shape[0]
    out = np.empty(n)
    for k in range(n):
        term1 = min(0.0, float(np.min(a[: k + 1])))
        # suffix_min[s] = min(a[s..k])
        suffix_min = np.minimum.accumulate(a[k::-1])[::-1]
        term2 = float(np.max(np.minimum(b[: k + 1], suffix_min)))
        out[k] = max(term1, term2)
    return Path(psi.times, out)


# ---------------------------------------------------------------------------
# valley domains and the exact 2-D orthant solver
# ---------------------------------------------------------------------------


def valley_esm(psi: Path, domain) -> tuple[Path, Path]:
    """Constrain a 2-D path to a valley domain; returns (Z, Y).

    The height coordinate reflects through the 1-D map; the lateral
    coordinate is constrained between the curves evaluated along the
    reflected height.
    """
    if psi.dim != 2:
        raise DomainError(f"valley constraint needs a 2-D path, got dim={psi.dim}")
    x0, y0 = psi.values[0]
    if y0 < -MEMBERSHIP_TOL:
        raise DomainError(f"psi(0) = {psi.values[0]} has negative height")
    z2 = gamma1_values(psi.values[:, 1])
    ell = domain.left(z2)
    r = domain.right(z2)
    if not (ell[0] - MEMBERSHIP_TOL <= x0 <= r[0] + MEMBERSHIP_TOL):
        raise DomainError(f"psi(0) = {psi.values[0]} lies outside the valley")
    _check_barriers(psi.values[:, 0], ell, r)
    z1 = psi.values[:, 0] - xi_values(psi.values[:, 0], ell, r)
    z = np.column_stack([z1, z2])
    return Path(psi.times, z), Path(psi.times, z - psi.values)


def gps_esm_2d_exact(psi: Path, weights: GpsWeights) -> tuple[Path, Path]:
    """Exact J = 2 orthant solver via the rotation w = x1 - x2, h = x1 + x2.

    In rotated coordinates the orthant is the wedge -h <= w <= h, so the
    h-component reflects through the 1-D map and the w-component through the
    two-sided map; <v, Z> = Gamma_1(<v, psi>) holds by construction.
    """
    if weights.dim != 2 or psi.dim != 2:
        raise DomainError("the exact rotation solver requires J = 2")
    if np.any(psi.values[0] < -MEMBERSHIP_TOL):
        raise DomainError(f"psi(0) = {psi.values[0]} outside the quadrant")
    h = psi.values[:, 0] + psi.values[:, 1]
    w = psi.values[:, 0] - psi.values[:, 1]
    hz = gamma1_values(h)
    wz = w - xi_values(w, -hz, hz)
    z = np.column_stack([(hz + wz) / 2.0, (hz - wz) / 2.0])
    return Path(psi.times, z), Path(psi.times, z - psi.values)


# ---------------------------------------------------------------------------
# per-step complementarity solver for the orthant family
# ---------------------------------------------------------------------------


class GpsBatchSolver:
    """Vectorized two-stage constraint step for batches of orthant states.

    Stage 1 adds gamma * v with gamma = max(0, -<v, z + delta>)/J, pinning
    the summed coordinate to its reflected value.  Stage 2 solves the face
    complementarity problem w = x + D beta >= 0, beta >= 0, beta_i w_i = 0
    by enumerating active sets (subsets ordered by size, then index), with
    ties broken toward the smallest |beta|_1.
    """

    def __init__(self, weights: GpsWeights, tol: float = MEMBERSHIP_TOL):
        self.weights = weights
        self.tol = tol
        self.dim = weights.dim
        # columns are the face directions
        self.directions = np.stack(gps_directions(weights), axis=1)
        self._subsets = self._build_tables()

    def _build_tables(self):
        j = self.dim
        masks = sorted(range(1, 2**j), key=lambda m: (bin(m).count("1"), m))
        tables = []
        for mask in masks:
            active = np.array([i for i in range(j) if mask >> i & 1])
            inactive = np.array([i for i in range(j) if not mask >> i & 1], dtype=int)
            sub = self.directions[np.ix_(active, active)]
            try:
                inv = np.linalg.inv(sub)
            except np.linalg.LinAlgError:
                continue  # singular face combination (e.g. all faces at once)
            cross = self.directions[np.ix_(inactive, active)]
            tables.append((active, inactive, inv, cross))
        return tables

    def step(self, z_prev: np.ndarray, delta: np.ndarray):
        """Advance a batch (P, J) of states; returns (z_next, gamma)."""
        s = z_prev + delta
        gamma = np.maximum(0.0, -s.sum(axis=1)) / self.dim
        x = s + gamma[:, None]
        interior = np.all(x >= -self.tol, axis=1)
        if np.all(interior):
            return x, gamma
        z_next = x.copy()
        idx = np.flatnonzero(~interior)
        z_next[idx] = self._solve_faces(x[idx], z_prev[idx], delta[idx])
        return z_next, gamma

    def _solve_faces(self, x, z_prev, delta):
        p = x.shape[0]
        best_cost = np.full(p, np.inf)
        best_z = np.empty_like(x)
        for active, inactive, inv, cross in self._subsets:
            beta = -x[:, active] @ inv.T
            w_off = x[:, inactive] + beta @ cross.T
            feasible = np.all(beta >= -self.tol, axis=1)
            if inactive.size:
                feasible &= np.all(w_off >= -self.tol, axis=1)
            cost = np.abs(beta).sum(axis=1)
            better = feasible & (cost < best_cost - 1e-15)
            if np.any(better):
                best_cost[better] = cost[better]
                block = np.zeros((int(better.sum()), x.shape[1]))
                block[:, inactive] = w_off[better]
                best_z[better] = block
        unsolved = ~np.isfinite(best_cost)
        if np.any(unsolved):
            k = int(np.argmax(unsolved))
            raise UnsolvableStepError(z_prev[k].copy(), delta[k].copy())
        return best_z


def gps_step_solver(
    z_prev, delta, weights: GpsWeights, tol: float = MEMBERSHIP_TOL
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Single constraint step from z_prev by increment delta.

    Returns (z_next, eta_incr) with eta_incr = z_next - z_prev - delta, the
    push accumulated by the vertex and face stages.
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if z_prev.shape != (weights.dim,) or delta.shape != (weights.dim,):
        raise DomainError(f"expected {weights.dim}-vectors, got {z_prev.shape}, {delta.shape}")
    if np.any(z_prev < -tol):
        raise DomainError(f"z_prev = {z_prev} outside the orthant")
    solver = GpsBatchSolver(weights, tol)
    z_next, _ = solver.step(z_prev[None, :], delta[None, :])
    z_next = z_next[0]
    # group (z_prev + delta) to reproduce the solver's internal sum bitwise,
    # so a free interior move yields an exactly zero push
    return z_next, z_next - (z_prev + delta)


def gps_esm_discrete(psi: Path, weights: GpsWeights) -> tuple[Path, Path]:
    """Fold the per-step solver over the increments of a sampled path.

    <v, Z> equals the 1-D map of <v, psi> at grid points by the stage-1
    construction; for J = 2 the output converges to the exact rotation
    solver as the mesh is refined.
    """
    if psi.dim != weights.dim:
        raise DomainError(f"path dim {psi.dim} does not match weights dim {weights.dim}")
    if np.any(psi.values[0] < -MEMBERSHIP_TOL):
        raise DomainError(f"psi(0) = {psi.values[0]} outside the orthant")
    solver = GpsBatchSolver(weights)
    n = psi.n_points
    z = np.empty_like(psi.values)
    z[0] = psi.values[0]
    state = psi.values[0][None, :].copy()
    for k in range(1, n):
        delta = (psi.values[k] - psi.values[k - 1])[None, :]
        state, _ = solver.step(state, delta)
        z[k] = state[0]
    return Path(psi.times, z), Path(psi.times, z - psi.values)
