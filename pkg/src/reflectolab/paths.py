"""Sampled continuous paths: the carrier type for psi, phi, eta, X, Z, Y, B.

A path is a strictly increasing time grid plus one J-vector per grid point.
All maps in this library act on grid values; linear interpolation between
grid points is a reporting convention only.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import GridError

__all__ = [
    "Path",
    "uniform_grid",
    "path_to_csv",
    "path_from_csv",
    "path_to_json",
    "path_from_json",
]

# 17 significant digits round-trips any IEEE-754 double exactly.
FLOAT_FMT = "%.17g"


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Path:
    """A sampled path: times (n,) strictly increasing, values (n, J)."""

    times: NDArray[np.float64]
    values: NDArray[np.float64]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = _as_readonly(np.atleast_1d(self.times))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        values = _as_readonly(values)
        if times.ndim != 1 or times.size == 0:
            raise GridError("time grid must be a nonempty 1-D array")
        if values.shape[0] != times.shape[0]:
            raise GridError(
                f"times ({times.shape[0]}) and values ({values.shape[0]}) differ in length"
            )
        if not np.all(np.isfinite(times)):
            raise GridError("time grid contains non-finite entries")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise GridError("time grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise GridError("path values contain non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_points(self) -> int:
        return self.times.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def scalar(self) -> NDArray[np.float64]:
        """The 1-D value array; error if the path is vector-valued."""
        if self.dim != 1:
            raise GridError(f"expected a 1-D path, got dim={self.dim}")
        return self.values[:, 0]

    def component(self, j: int) -> "Path":
        return Path(self.times, self.values[:, j])

    def prefix(self, n_points: int) -> "Path":
        return Path(self.times[:n_points], self.values[:n_points])

    def restrict(self, indices: np.ndarray) -> "Path":
        return Path(self.times[indices], self.values[indices])


def uniform_grid(horizon: float, steps: int) -> NDArray[np.float64]:
    """Grid t_k = T * (k / steps), k = 0..steps.

    With power-of-two step counts the ratios k/steps are exact binary
    fractions, so nested dyadic grids coincide bitwise.
    """
    if horizon <= 0:
        raise GridError(f"horizon must be positive, got {horizon}")
    if steps < 1:
        raise GridError(f"steps must be >= 1, got {steps}")
    return horizon * (np.arange(steps + 1, dtype=np.float64) / steps)


def path_to_csv(path: Path, fp) -> None:
    """Write columns t, x_1..x_J with 17 significant digits."""
    header = "t," + ",".join(f"x_{j + 1}" for j in range(path.dim))
    data = np.column_stack([path.times, path.values])
    np.savetxt(fp, data, fmt=FLOAT_FMT, delimiter=",", header=header, comments="")


def path_from_csv(fp) -> Path:
    if isinstance(fp, (str, bytes)) or hasattr(fp, "read"):
        data = np.loadtxt(fp, delimiter=",", skiprows=1, ndmin=2)
    else:
        raise TypeError("expected a file path or file object")
    return Path(data[:, 0], data[:, 1:])


def path_to_json(path: Path, fp=None) -> str | None:
    """JSON envelope {grid, values, dim, meta}; floats round-trip bit-exactly."""
    doc = {
        "grid": path.times.tolist(),
        "values": path.values.tolist(),
        "dim": path.dim,
        "meta": path.meta,
    }
    text = json.dumps(doc, sort_keys=True)
    if fp is None:
        return text
    fp.write(text)
    return None


def path_from_json(source) -> Path:
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        doc = json.loads(source)
    path = Path(np.asarray(doc["grid"]), np.asarray(doc["values"]), meta=doc.get("meta", {}))
    if path.dim != doc["dim"]:
        raise GridError(f"declared dim {doc['dim']} does not match values")
    return path


def path_csv_string(path: Path) -> str:
    buf = io.StringIO()
    path_to_csv(path, buf)
    return buf.getvalue()
