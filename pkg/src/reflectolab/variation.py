"""Variation estimators over nested dyadic partition ladders.

For a sampled path A and a partition pi^n of [0, T], the level-n sum is

    S_p(n) = sum_{t_i in pi^n} |A(t_i) - A(t_{i-1})|^p

with |.| the Euclidean norm for vector paths.  Zero p-variation is only
ever *diagnosed* here as a decay trend of ensemble medians across levels,
never declared as a pointwise limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import GridError, PartitionError, SpecMismatchError
from .paths import Path
from .sder import PathBundle, SderSpec

__all__ = [
    "PartitionLadder",
    "VariationReport",
    "DirichletReport",
    "p_variation_sum",
    "increment_sums",
    "total_variation_ladder",
    "oscillation",
    "dirichlet_decompose",
]


@dataclass(frozen=True)
class PartitionLadder:
    """Nested dyadic partitions of [0, T] for a contiguous level range.

    Level n has 2^n intervals of mesh T * 2^-n; each level's points are a
    subset of the next level's points.
    """

    horizon: float
    level_min: int
    level_max: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise GridError(f"horizon must be positive, got {self.horizon}")
        if self.level_min < 0 or self.level_max < self.level_min:
            raise GridError(
                f"need 0 <= level_min <= level_max, got [{self.level_min}, {self.level_max}]"
            )

    @property
    def levels(self) -> range:
        return range(self.level_min, self.level_max + 1)

    def mesh(self, level: int) -> float:
        return self.horizon * 2.0**-level

    def meshes(self) -> list[float]:
        return [self.mesh(n) for n in self.levels]

    def partition(self, level: int) -> NDArray[np.float64]:
        count = 1 << level
        return self.horizon * (np.arange(count + 1, dtype=np.float64) / count)


def _grid_indices(path: Path, partition_times: np.ndarray) -> np.ndarray:
    """Map partition times onto the path grid; exact membership required."""
    times = path.times
    idx = np.searchsorted(times, partition_times)
    idx = np.clip(idx, 0, times.size - 1)
    # searchsorted returns the left insertion point; the match may sit one
    # slot lower when the query is a hair below the grid value.
    tol = 1e-12 * max(abs(times[-1]), 1.0)
    lower = np.clip(idx - 1, 0, times.size - 1)
    use_lower = np.abs(times[lower] - partition_times) <= np.abs(times[idx] - partition_times)
    idx = np.where(use_lower, lower, idx)
    bad = np.abs(times[idx] - partition_times) > tol
    if np.any(bad):
        k = int(np.argmax(bad))
        raise PartitionError(
            f"partition point {partition_times[k]!r} is not on the path grid"
        )
    return idx


def p_variation_sum(path: Path, partition_times, p: float) -> float:
    """S_p over one partition whose points must lie on the path grid."""
    if p <= 0:
        raise GridError(f"p must be positive, got {p}")
    partition_times = np.asarray(partition_times, dtype=np.float64)
    idx = _grid_indices(path, partition_times)
    increments = path.values[idx[1:]] - path.values[idx[:-1]]
    norms = np.linalg.norm(increments, axis=1)
    return float(np.sum(norms**p))


def increment_sums(values: np.ndarray, stride_levels: list[int], p: float) -> np.ndarray:
    """Level sums for pre-sampled values (P, K+1, J): one column per level.

    ``stride_levels`` gives the index stride of each level within the
    sampled array (finest level has stride 1).
    """
    out = np.empty((values.shape[0], len(stride_levels)))
    for col, stride in enumerate(stride_levels):
        sub = values[:, ::stride, :]
        norms = np.linalg.norm(sub[:, 1:, :] - sub[:, :-1, :], axis=2)
        out[:, col] = (norms**p).sum(axis=1)
    return out


@dataclass(frozen=True)
class VariationReport:
    """Per-level sums S_p(n) for one path component."""

    p: float
    levels: tuple[int, ...]
    meshes: tuple[float, ...]
    sums: tuple[float, ...]
    component: str = "path"
    path_id: int = 0

    def rows(self):
        for level, mesh, s in zip(self.levels, self.meshes, self.sums):
            yield (level, mesh, s, self.component, self.path_id)


def variation_report(
    path: Path, ladder: PartitionLadder, p: float, component: str = "path", path_id: int = 0
) -> VariationReport:
    sums = tuple(p_variation_sum(path, ladder.partition(n), p) for n in ladder.levels)
    return VariationReport(
        p=p,
        levels=tuple(ladder.levels),
        meshes=tuple(ladder.meshes()),
        sums=sums,
        component=component,
        path_id=path_id,
    )


def total_variation_ladder(
    path: Path, ladder: PartitionLadder, component: str = "path", path_id: int = 0
) -> VariationReport:
    """S_1 per ladder level; nondecreasing in the level on nested ladders."""
    return variation_report(path, ladder, 1.0, component=component, path_id=path_id)


def oscillation(path: Path, s: float, t: float) -> float:
    """max - min of a 1-D path over the grid points in [s, t]."""
    values = path.scalar()
    if s > t:
        raise GridError(f"need s <= t, got s={s}, t={t}")
    mask = (path.times >= s) & (path.times <= t)
    if not np.any(mask):
        return 0.0
    window = values[mask]
    return float(window.max() - window.min())


@dataclass(frozen=True)
class DirichletReport:
    """Quadratic-variation ladder of the martingale and compensator parts."""

    levels: tuple[int, ...]
    meshes: tuple[float, ...]
    martingale_sums: tuple[float, ...]
    compensator_sums: tuple[float, ...]
    predicted_martingale_qv: float


def dirichlet_decompose(bundle: PathBundle, spec: SderSpec, ladder: PartitionLadder) -> DirichletReport:
    """Split Z = Z(0) + M + A with A = int b(Z) ds + Y and report S_2 ladders.

    The drift integral uses trapezoidal quadrature on the simulation grid;
    M is recovered as Z - Z(0) - A.  The predicted martingale quadratic
    variation is the trapezoidal integral of trace(sigma^T sigma)(Z).
    """
    if spec.spec_hash() != bundle.spec.spec_hash():
        raise SpecMismatchError("bundle was simulated under a different spec")
    times = bundle.z.times
    z = bundle.z.values
    dt = np.diff(times)

    drift = spec.coefficients.drift(z)
    drift_integral = np.zeros_like(z)
    np.cumsum(0.5 * (drift[:-1] + drift[1:]) * dt[:, None], axis=0, out=drift_integral[1:])

    compensator = drift_integral + bundle.y.values
    martingale = z - z[0] - compensator

    sigma = spec.coefficients.dispersion(z)
    trace_a = (sigma**2).sum(axis=(1, 2))
    predicted_qv = float(np.sum(0.5 * (trace_a[:-1] + trace_a[1:]) * dt))

    m_path = Path(times, martingale)
    a_path = Path(times, compensator)
    m_sums = tuple(p_variation_sum(m_path, ladder.partition(n), 2.0) for n in ladder.levels)
    a_sums = tuple(p_variation_sum(a_path, ladder.partition(n), 2.0) for n in ladder.levels)
    return DirichletReport(
        levels=tuple(ladder.levels),
        meshes=tuple(ladder.meshes()),
        martingale_sums=m_sums,
        compensator_sums=a_sums,
        predicted_martingale_qv=predicted_qv,
    )
