"""Monte Carlo studies of the structural properties of reflected diffusions.

Four studies are provided:

* ``hitting_probability_experiment`` — from a start on the level set
  {<v, z> = eps}, the chance of reaching level 1 before the origin is eps
  for the driftless orthant diffusion; estimated with controlled seeds.
* ``variation_blowup_experiment`` — total-variation ladders of the push Y
  grow without bound for origin-started paths but plateau for an ensemble
  stopped before approaching the vertex.
* ``ladder_lower_bound_experiment`` — the functional
  (1/eps) E[(1 - e^{-L(beta_1)}) 1{down first}] along the geometric ladder
  of level sets stays bounded away from zero as eps shrinks.
* ``valley_dirichlet_experiment`` — for cusp domains the lateral push has
  decaying quadratic-variation ladders while the vertical push is monotone.

Every experiment is a deterministic function of its configuration and the
master seed: path i draws from a generator seeded by (seed, i), and
reductions iterate in path order.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domains import GpsOrthant, GpsWeights, HalfLine, ValleyDomain, ValleyEsp
from .errors import DomainError
from .paths import Path
from .sder import (
    CoefficientField,
    driftless_identity,
    make_constraint_state,
    path_rng,
)
from .variation import PartitionLadder, increment_sums

__all__ = [
    "McSummary",
    "LadderTimes",
    "HittingResult",
    "BlowupResult",
    "LadderBoundResult",
    "ValleyDirichletResult",
    "PushVariationResult",
    "push_variation_ensemble",
    "hitting_probability_experiment",
    "variation_blowup_experiment",
    "ladder_lower_bound_experiment",
    "valley_dirichlet_experiment",
    "alternating_ladder_times",
    "neighbor_ladder_times",
    "config_hash",
]

_CHUNK_STEPS = 1024
# cap on floats held per draw chunk (keeps big ensembles inside ~128 MB)
_CHUNK_BUDGET = 2**24


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class McSummary:
    """Monte Carlo estimate with provenance."""

    estimate: float
    n_paths: int
    std_error: float
    ci95_low: float
    ci95_high: float
    seed: int
    config_hash: str

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int, cfg_hash: str) -> "McSummary":
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.size
        mean = float(samples.mean()) if n else float("nan")
        se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(
            estimate=mean,
            n_paths=n,
            std_error=se,
            ci95_low=mean - 1.96 * se if n > 1 else float("nan"),
            ci95_high=mean + 1.96 * se if n > 1 else float("nan"),
            seed=seed,
            config_hash=cfg_hash,
        )

    def to_json_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "n_paths": self.n_paths,
            "std_error": self.std_error,
            "ci95": [self.ci95_low, self.ci95_high],
            "seed": self.seed,
            "config_hash": self.config_hash,
        }


@dataclass(frozen=True)
class LadderTimes:
    """Alternating or neighbor-ladder stopping times extracted from a path."""

    kind: str
    times: tuple[float, ...]
    levels: tuple[float, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.times)
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise DomainError("ladder times must be nondecreasing")


def _observable(path: Path) -> np.ndarray:
    return path.values.sum(axis=1) if path.dim > 1 else path.values[:, 0]


def _first_at_or_after(mask: np.ndarray, start: int) -> int | None:
    hits = np.flatnonzero(mask[start:])
    return int(hits[0]) + start if hits.size else None


def alternating_ladder_times(z: Path, eps: float, origin_tol: float) -> LadderTimes:
    """Alternating first-passage times: up to the eps level set, back to the
    origin surrogate, repeatedly.  tau_n <= alpha_n <= tau_{n+1}."""
    obs = _observable(z)
    times: list[float] = []
    k = 0
    while True:
        k = _first_at_or_after(obs >= eps, k)
        if k is None:
            break
        times.append(float(z.times[k]))
        k = _first_at_or_after(obs <= origin_tol, k)
        if k is None:
            break
        times.append(float(z.times[k]))
    return LadderTimes(kind="alternating", times=tuple(times))


def neighbor_ladder_times(z: Path, eps: float) -> LadderTimes:
    """Passage times through the geometric ladder {2^n eps}: from level
    2^n eps, the next time is the first visit to 2^{n-1} eps or 2^{n+1} eps."""
    obs = _observable(z)
    n0 = np.log2(obs[0] / eps)
    if abs(n0 - round(n0)) > 1e-9:
        raise DomainError(f"start value {obs[0]} is not on the ladder of {eps}")
    level = int(round(n0))
    times = [float(z.times[0])]
    levels = [eps * 2.0**level]
    k = 0
    while True:
        lo, hi = eps * 2.0 ** (level - 1), eps * 2.0 ** (level + 1)
        k = _first_at_or_after((obs <= lo) | (obs >= hi), k)
        if k is None:
            break
        level += 1 if obs[k] >= hi else -1
        times.append(float(z.times[k]))
        levels.append(eps * 2.0**level)
    return LadderTimes(kind="neighbor", times=tuple(times), levels=tuple(levels))


# ---------------------------------------------------------------------------
# vectorized ensemble loops
# ---------------------------------------------------------------------------


def _draw_chunk(rngs, length: int, noise_dim: int) -> np.ndarray:
    return np.stack([rng.standard_normal((length, noise_dim)) for rng in rngs])


def _chunk_length(n_paths: int, noise_dim: int) -> int:
    return max(32, min(_CHUNK_STEPS, _CHUNK_BUDGET // max(1, n_paths * noise_dim)))


def _first_true_per_row(mask: np.ndarray) -> np.ndarray:
    """First True column per row; number of columns if none."""
    any_hit = mask.any(axis=1)
    return np.where(any_hit, mask.argmax(axis=1), mask.shape[1])


def _constant_increments(coeffs: CoefficientField, start: np.ndarray, dt: float):
    b, s = coeffs.evaluate(start[:1])
    b0, s0 = b[0], s[0]
    identity = s0.shape[0] == s0.shape[1] and np.array_equal(s0, np.eye(s0.shape[0]))
    drift_step = b0 * dt

    def make(db):
        dx = db if identity else db @ s0.T
        if np.any(drift_step):
            dx = dx + drift_step
        return dx

    return make


def _decide_paths(
    esp,
    coeffs: CoefficientField,
    start: np.ndarray,
    dt: float,
    seed: int,
    indices: np.ndarray,
    lo: float,
    hi: float,
    max_steps: int,
    band: tuple[float, float] | None = None,
    stream: int = 0,
):
    """Run paths until the summed coordinate leaves (lo, hi); optional
    first-passage band with push-variation accumulation up to it.

    Returns per-path arrays: outcome (+1 up / -1 down / 0 capped),
    steps_used, tv (step-level total variation of Y up to the band time),
    band_step (-1 if the band was never reached).
    """
    n = indices.size
    dim = start.shape[-1]
    outcome = np.zeros(n, dtype=np.int8)
    steps_used = np.zeros(n, dtype=np.int64)
    tv = np.zeros(n)
    band_step = np.full(n, -1, dtype=np.int64)

    rngs = [path_rng(seed, int(i), stream) for i in indices]
    state = make_constraint_state(esp, np.broadcast_to(start, (n, dim)))
    z = state.current()
    obs0 = z.sum(axis=1)
    outcome[obs0 >= hi] = 1
    outcome[obs0 <= lo] = -1

    alive = np.flatnonzero(outcome == 0)
    rngs = [rngs[i] for i in alive]
    state.compress(alive)
    band_pending = np.ones(alive.size, dtype=bool) if band is not None else None

    make_dx = None
    if not coeffs.state_dependent:
        make_dx = _constant_increments(coeffs, np.atleast_2d(start), dt)
    sqrt_dt = np.sqrt(dt)
    done_steps = 0
    noise_dim = coeffs.noise_dim

    while alive.size and done_steps < max_steps:
        length = min(_chunk_length(alive.size, noise_dim), max_steps - done_steps)
        db = _draw_chunk(rngs, length, noise_dim) * sqrt_dt
        dx_all = make_dx(db) if make_dx is not None else None
        obs_buf = np.empty((alive.size, length))
        dy_buf = np.empty((alive.size, length)) if band is not None else None
        z = state.current()
        for k in range(length):
            if dx_all is not None:
                dxk = dx_all[:, k]
            else:
                bz, sz = coeffs.evaluate(z)
                dxk = bz * dt + np.einsum("pjn,pn->pj", sz, db[:, k])
            z_prev = z
            z = state.advance(dxk)
            obs_buf[:, k] = z.sum(axis=1)
            if band is not None:
                dy_buf[:, k] = np.linalg.norm(z - z_prev - dxk, axis=1)

        if band is not None:
            idx_band = _first_true_per_row((obs_buf <= band[0]) | (obs_buf >= band[1]))
            cum = np.cumsum(dy_buf, axis=1)
            upto = np.minimum(idx_band, length - 1)
            add = np.where(band_pending, cum[np.arange(alive.size), upto], 0.0)
            tv[alive] += add
            crossed = band_pending & (idx_band < length)
            band_step[alive[crossed]] = done_steps + idx_band[crossed] + 1
            band_pending = band_pending & ~crossed

        idx_down = _first_true_per_row(obs_buf <= lo)
        idx_up = _first_true_per_row(obs_buf >= hi)
        idx_dec = np.minimum(idx_down, idx_up)
        decided = idx_dec < length
        if np.any(decided):
            rows = np.flatnonzero(decided)
            outcome[alive[rows]] = np.where(idx_up[rows] < idx_down[rows], 1, -1)
            steps_used[alive[rows]] = done_steps + idx_dec[rows] + 1
        done_steps += length

        keep = np.flatnonzero(~decided)
        if keep.size != alive.size:
            alive = alive[keep]
            rngs = [rngs[i] for i in keep]
            state.compress(keep)
            if band_pending is not None:
                band_pending = band_pending[keep]

    steps_used[outcome == 0] = done_steps
    return {
        "outcome": outcome,
        "steps_used": steps_used,
        "tv": tv,
        "band_step": band_step,
    }


def _sampled_push(
    esp,
    coeffs: CoefficientField,
    start: np.ndarray,
    dt: float,
    n_steps: int,
    seed: int,
    indices: np.ndarray,
    stride: int,
    stop_level: float | None = None,
    stream: int = 0,
):
    """Simulate paths over a fixed grid and sample Y = Z - X every `stride`
    steps; when `stop_level` is set, Y is frozen at the first time the
    summed coordinate drops to that level (the stopped process Y(t ^ tau))."""
    n = indices.size
    dim = esp.dim
    n_samples = n_steps // stride
    sampled = np.zeros((n, n_samples + 1, dim))
    rngs = [path_rng(seed, int(i), stream) for i in indices]
    state = make_constraint_state(esp, np.broadcast_to(start, (n, dim)))
    x = np.empty((n, dim))
    x[:] = start
    z = state.current()
    sampled[:, 0, :] = z - x

    no_stop = n_steps + 1
    stop_step = np.full(n, no_stop, dtype=np.int64)
    y_stop = np.zeros((n, dim))
    if stop_level is not None:
        hit0 = z.sum(axis=1) <= stop_level
        stop_step[hit0] = 0
        y_stop[hit0] = (z - x)[hit0]

    make_dx = None
    if not coeffs.state_dependent:
        make_dx = _constant_increments(coeffs, x, dt)
    sqrt_dt = np.sqrt(dt)
    noise_dim = coeffs.noise_dim
    done = 0
    while done < n_steps:
        length = min(_chunk_length(n, noise_dim), n_steps - done)
        db = _draw_chunk(rngs, length, noise_dim) * sqrt_dt
        dx_all = make_dx(db) if make_dx is not None else None
        y_buf = np.empty((n, length, dim))
        obs_buf = np.empty((n, length)) if stop_level is not None else None
        for k in range(length):
            if dx_all is not None:
                dxk = dx_all[:, k]
            else:
                bz, sz = coeffs.evaluate(z)
                dxk = bz * dt + np.einsum("pjn,pn->pj", sz, db[:, k])
            x += dxk
            z = state.advance(dxk)
            y_buf[:, k] = z - x
            if obs_buf is not None:
                obs_buf[:, k] = z.sum(axis=1)

        if stop_level is not None:
            pending = stop_step == no_stop
            idx = _first_true_per_row(obs_buf <= stop_level)
            newly = pending & (idx < length)
            rows = np.flatnonzero(newly)
            stop_step[rows] = done + idx[rows] + 1
            y_stop[rows] = y_buf[rows, idx[rows]]

        first_sample = -(-(done + 1) // stride)  # ceil((done+1)/stride)
        for si in range(first_sample, (done + length) // stride + 1):
            g = si * stride
            col = g - done - 1
            if stop_level is not None:
                frozen = stop_step <= g
                sampled[:, si] = np.where(frozen[:, None], y_stop, y_buf[:, col])
            else:
                sampled[:, si] = y_buf[:, col]
        done += length
    return sampled, stop_step


# ---------------------------------------------------------------------------
# parallel driver
# ---------------------------------------------------------------------------


def _run_batches(worker, params: dict, n_paths: int, workers: int, batch: int = 4096):
    batches = [np.arange(i, min(i + batch, n_paths)) for i in range(0, n_paths, batch)]
    if workers <= 1 or len(batches) == 1:
        parts = [worker((params, b)) for b in batches]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, [(params, b) for b in batches]))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


# ---------------------------------------------------------------------------
# hitting probability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HittingResult:
    summary: McSummary
    predicted: float
    deviation_se: float
    capped_fraction: float
    outcomes: np.ndarray
    steps_used: np.ndarray
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "experiment": "hitting",
            "summary": self.summary.to_json_dict(),
            "predicted": self.predicted,
            "deviation_se": self.deviation_se,
            "capped_fraction": self.capped_fraction,
            "config": self.config,
        }

    def per_path_rows(self):
        header = ("path_id", "outcome", "indicator", "steps_used")
        rows = [
            (i, int(o), 1 if o == 1 else 0, int(s))
            for i, (o, s) in enumerate(zip(self.outcomes, self.steps_used))
        ]
        return header, rows


def _hitting_worker(args):
    params, indices = args
    esp = GpsOrthant(GpsWeights(tuple(params["alpha"])))
    coeffs = params["coefficients"]
    res = _decide_paths(
        esp,
        coeffs,
        np.asarray(params["start"]),
        params["dt"],
        params["seed"],
        indices,
        lo=params["origin_tol"],
        hi=1.0,
        max_steps=params["max_steps"],
    )
    return {"outcome": res["outcome"], "steps_used": res["steps_used"]}


def hitting_probability_experiment(
    eps: float,
    n_paths: int,
    seed: int,
    *,
    weights: GpsWeights = GpsWeights((0.5, 0.5)),
    coefficients: CoefficientField | None = None,
    start=None,
    steps: int = 2**14,
    horizon: float = 4.0,
    max_doublings: int = 3,
    origin_tol: float | None = None,
    workers: int = 1,
) -> HittingResult:
    """Estimate P(origin hit no earlier than the level-1 set) from H_eps.

    For the driftless uniformly elliptic orthant diffusion the summed
    coordinate is a martingale before the origin, so the estimate should
    equal eps.  Exact origin hits have probability zero on a grid; the hit
    is declared at <v, Z> <= origin_tol (default eps/100).  Paths deciding
    neither way get their horizon doubled up to `max_doublings` times; the
    remainder are reported as capped and excluded from the estimate.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if coefficients is None:
        coefficients = driftless_identity(weights.dim)
    if start is None:
        start = eps * weights.as_array()
    start = np.asarray(start, dtype=np.float64)
    if origin_tol is None:
        origin_tol = eps * 1e-2
    cfg = {
        "experiment": "hitting",
        "eps": eps,
        "n_paths": n_paths,
        "seed": seed,
        "alpha": list(weights.alpha),
        "coefficients": coefficients.describe(),
        "start": start.tolist(),
        "steps": steps,
        "horizon": horizon,
        "max_doublings": max_doublings,
        "origin_tol": origin_tol,
    }
    cfg_hash = config_hash(cfg)
    params = {
        "alpha": list(weights.alpha),
        "coefficients": coefficients,
        "start": start.tolist(),
        "dt": horizon / steps,
        "seed": seed,
        "origin_tol": origin_tol,
        "max_steps": steps << max_doublings,
    }
    merged = _run_batches(_hitting_worker, params, n_paths, workers)
    outcomes = merged["outcome"]
    decided = outcomes != 0
    indicators = (outcomes[decided] == 1).astype(np.float64)
    summary = McSummary.from_samples(indicators, seed, cfg_hash)
    capped = 1.0 - decided.mean() if n_paths else 0.0
    dev = (summary.estimate - eps) / summary.std_error if summary.std_error else float("inf")
    return HittingResult(
        summary=summary,
        predicted=eps,
        deviation_se=float(dev),
        capped_fraction=float(capped),
        outcomes=outcomes,
        steps_used=merged["steps_used"],
        config=cfg,
    )


# ---------------------------------------------------------------------------
# variation blow-up and the Dirichlet trend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlowupResult:
    levels: tuple[int, ...]
    meshes: tuple[float, ...]
    origin_s1_medians: tuple[float, ...]
    origin_s2_medians: tuple[float, ...]
    comparison_s1_medians: tuple[float, ...]
    origin_s1: np.ndarray
    origin_s2: np.ndarray
    comparison_s1: np.ndarray
    seed: int
    config: dict

    def growth_ratio(self, ensemble: str, level_from: int, level_to: int) -> float:
        medians = {
            "origin": self.origin_s1_medians,
            "comparison": self.comparison_s1_medians,
        }[ensemble]
        i = self.levels.index(level_from)
        j = self.levels.index(level_to)
        lo, hi = medians[i], medians[j]
        if lo == 0.0:
            return float("inf") if hi > 0.0 else 1.0
        return hi / lo

    def to_json_dict(self) -> dict:
        return {
            "experiment": "blowup",
            "levels": list(self.levels),
            "meshes": list(self.meshes),
            "origin_s1_medians": list(self.origin_s1_medians),
            "origin_s2_medians": list(self.origin_s2_medians),
            "comparison_s1_medians": list(self.comparison_s1_medians),
            "seed": self.seed,
            "config": self.config,
        }

    def per_path_rows(self):
        header = ("ensemble", "path_id", "level", "mesh", "p", "sum")
        rows = []
        for name, table, p in (
            ("origin", self.origin_s1, 1),
            ("origin", self.origin_s2, 2),
            ("comparison", self.comparison_s1, 1),
        ):
            for pid in range(table.shape[0]):
                for col, level in enumerate(self.levels):
                    rows.append((name, pid, level, self.meshes[col], p, table[pid, col]))
        return header, rows


def _blowup_worker(args):
    params, indices = args
    esp = GpsOrthant(GpsWeights(tuple(params["alpha"])))
    coeffs = params["coefficients"]
    sampled, _ = _sampled_push(
        esp,
        coeffs,
        np.asarray(params["start"]),
        params["dt"],
        params["n_steps"],
        params["seed"],
        indices,
        params["stride"],
        stop_level=params["stop_level"],
        stream=params["stream"],
    )
    strides = params["level_strides"]
    return {
        "s1": increment_sums(sampled, strides, 1.0),
        "s2": increment_sums(sampled, strides, 2.0),
    }


def variation_blowup_experiment(
    horizon: float,
    ladder: PartitionLadder,
    n_paths: int,
    seed: int,
    *,
    weights: GpsWeights = GpsWeights((0.5, 0.5)),
    coefficients: CoefficientField | None = None,
    steps: int = 2**16,
    comparison_start=None,
    comparison_stop_level: float = 0.5,
    workers: int = 1,
) -> BlowupResult:
    """Per-level ensemble medians of S_1(Y) (and S_2(Y)) for origin-started
    orthant paths, against a comparison ensemble started on the level-1 set
    and stopped on first passage to `comparison_stop_level`.

    The origin ensemble's S_1 medians grow across levels (total-variation
    blow-up at the vertex); the stopped ensemble's plateau (it never
    approaches the vertex, where alone the variation diverges).
    """
    if abs(ladder.horizon - horizon) > 1e-12 * max(horizon, 1.0):
        raise DomainError("ladder horizon must match the simulation horizon")
    if steps % (1 << ladder.level_max):
        raise DomainError("steps must be divisible by the finest ladder level")
    if coefficients is None:
        coefficients = driftless_identity(weights.dim)
    if comparison_start is None:
        comparison_start = np.eye(weights.dim)[0]
    comparison_start = np.asarray(comparison_start, dtype=np.float64)
    origin = np.zeros(weights.dim)

    stride = steps // (1 << ladder.level_max)
    level_strides = [1 << (ladder.level_max - n) for n in ladder.levels]
    cfg = {
        "experiment": "blowup",
        "horizon": horizon,
        "levels": [ladder.level_min, ladder.level_max],
        "n_paths": n_paths,
        "seed": seed,
        "alpha": list(weights.alpha),
        "coefficients": coefficients.describe(),
        "steps": steps,
        "comparison_start": comparison_start.tolist(),
        "comparison_stop_level": comparison_stop_level,
    }
    base = {
        "alpha": list(weights.alpha),
        "coefficients": coefficients,
        "dt": horizon / steps,
        "n_steps": steps,
        "stride": stride,
        "level_strides": level_strides,
    }
    origin_params = {**base, "start": origin.tolist(), "stop_level": None, "seed": seed, "stream": 0}
    cmp_params = {
        **base,
        "start": comparison_start.tolist(),
        "stop_level": comparison_stop_level,
        "seed": seed,
        # disjoint per-path seed stream for the comparison ensemble
        "stream": 1,
    }
    origin_merged = _run_batches(_blowup_worker, origin_params, n_paths, workers)
    cmp_merged = _run_batches(_blowup_worker, cmp_params, n_paths, workers)
    return BlowupResult(
        levels=tuple(ladder.levels),
        meshes=tuple(ladder.meshes()),
        origin_s1_medians=tuple(np.median(origin_merged["s1"], axis=0)),
        origin_s2_medians=tuple(np.median(origin_merged["s2"], axis=0)),
        comparison_s1_medians=tuple(np.median(cmp_merged["s1"], axis=0)),
        origin_s1=origin_merged["s1"],
        origin_s2=origin_merged["s2"],
        comparison_s1=cmp_merged["s1"],
        seed=seed,
        config=cfg,
    )


@dataclass(frozen=True)
class PushVariationResult:
    """Variation ladders of Y for a configured ensemble (CLI `variation`)."""

    levels: tuple[int, ...]
    meshes: tuple[float, ...]
    s1: np.ndarray
    s2: np.ndarray
    seed: int
    config: dict

    def quantiles(self, table: np.ndarray) -> dict:
        q = np.quantile(table, [0.25, 0.5, 0.75], axis=0)
        return {"q25": q[0].tolist(), "median": q[1].tolist(), "q75": q[2].tolist()}

    def to_json_dict(self) -> dict:
        return {
            "experiment": "variation",
            "levels": list(self.levels),
            "meshes": list(self.meshes),
            "s1": self.quantiles(self.s1),
            "s2": self.quantiles(self.s2),
            "seed": self.seed,
            "config": self.config,
        }

    def per_path_rows(self):
        header = ("level", "mesh", "S_p", "component", "path_id", "p")
        rows = []
        for table, p in ((self.s1, 1), (self.s2, 2)):
            for pid in range(table.shape[0]):
                for col, level in enumerate(self.levels):
                    rows.append((level, self.meshes[col], table[pid, col], "Y", pid, p))
        return header, rows


def _esp_from_params(p: dict):
    kind = p["kind"]
    if kind == "half-line":
        return HalfLine()
    if kind == "gps":
        return GpsOrthant(GpsWeights(tuple(p["alpha"])))
    if kind == "valley":
        return ValleyEsp(ValleyDomain(p["alpha_l"], p["alpha_r"], p["c_l"], p["c_r"]))
    raise DomainError(f"unknown domain kind {kind!r}")


def _pushvar_worker(args):
    params, indices = args
    esp = _esp_from_params(params["esp"])
    sampled, _ = _sampled_push(
        esp,
        params["coefficients"],
        np.asarray(params["start"]),
        params["dt"],
        params["n_steps"],
        params["seed"],
        indices,
        params["stride"],
    )
    strides = params["level_strides"]
    return {
        "s1": increment_sums(sampled, strides, 1.0),
        "s2": increment_sums(sampled, strides, 2.0),
    }


def push_variation_ensemble(
    esp,
    coefficients: CoefficientField,
    start,
    ladder: PartitionLadder,
    steps: int,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> PushVariationResult:
    """Per-path S_1 and S_2 ladders of the push Y for any configured domain."""
    if steps % (1 << ladder.level_max):
        raise DomainError("steps must be divisible by the finest ladder level")
    start = np.asarray(start, dtype=np.float64)
    cfg = {
        "experiment": "variation",
        "esp": esp.describe(),
        "coefficients": coefficients.describe(),
        "start": start.tolist(),
        "horizon": ladder.horizon,
        "levels": [ladder.level_min, ladder.level_max],
        "steps": steps,
        "n_paths": n_paths,
        "seed": seed,
    }
    params = {
        "esp": esp.describe(),
        "coefficients": coefficients,
        "start": start.tolist(),
        "dt": ladder.horizon / steps,
        "n_steps": steps,
        "stride": steps // (1 << ladder.level_max),
        "level_strides": [1 << (ladder.level_max - n) for n in ladder.levels],
        "seed": seed,
    }
    merged = _run_batches(_pushvar_worker, params, n_paths, workers)
    return PushVariationResult(
        levels=tuple(ladder.levels),
        meshes=tuple(ladder.meshes()),
        s1=merged["s1"],
        s2=merged["s2"],
        seed=seed,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# geometric-ladder lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LadderBoundResult:
    eps: float
    summary: McSummary
    down_frequency: float
    capped_fraction: float
    steps: int
    dt: float
    functionals: np.ndarray
    outcomes: np.ndarray
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "experiment": "ladder",
            "eps": self.eps,
            "summary": self.summary.to_json_dict(),
            "down_frequency": self.down_frequency,
            "capped_fraction": self.capped_fraction,
            "variation_proxy": {"steps": self.steps, "dt": self.dt},
            "config": self.config,
        }

    def per_path_rows(self):
        header = ("path_id", "outcome", "functional")
        rows = [
            (i, int(o), f) for i, (o, f) in enumerate(zip(self.outcomes, self.functionals))
        ]
        return header, rows


def _ladder_worker(args):
    params, indices = args
    esp = GpsOrthant(GpsWeights(tuple(params["alpha"])))
    coeffs = params["coefficients"]
    eps = params["eps"]
    res = _decide_paths(
        esp,
        coeffs,
        np.asarray(params["start"]),
        params["dt"],
        params["seed"],
        indices,
        lo=params["origin_tol"],
        hi=1.0,
        max_steps=params["max_steps"],
        band=(eps / 2.0, 2.0 * eps),
    )
    return res


def ladder_lower_bound_experiment(
    eps_values,
    n_paths: int,
    seed: int,
    *,
    weights: GpsWeights = GpsWeights((0.5, 0.5)),
    coefficients: CoefficientField | None = None,
    horizon: float = 4.0,
    max_doublings: int = 3,
    max_step_level: int = 20,
    workers: int = 1,
) -> list[LadderBoundResult]:
    """Estimate (1/eps) E[(1 - e^{-L(beta_1)}) 1{origin first}] per eps.

    beta_1 is the first passage to the neighbor levels {eps/2, 2 eps}; the
    true variation L(beta_1) is unobservable and is replaced by the
    step-level total variation of Y up to beta_1 (the proxy resolution is
    reported alongside).  The step count per eps is chosen so that one
    Brownian step is small against the band width.
    """
    if coefficients is None:
        coefficients = driftless_identity(weights.dim)
    results = []
    for eps in eps_values:
        if not 0.0 < eps <= 0.25:
            raise DomainError(f"eps must lie in (0, 0.25], got {eps}")
        # one-step noise std << band half-width: dt <= eps^2 / 128
        steps = 1 << int(np.ceil(np.log2(128.0 * horizon / eps**2)))
        steps = min(steps, 1 << max_step_level)
        origin_tol = eps * 1e-2
        cfg = {
            "experiment": "ladder",
            "eps": eps,
            "n_paths": n_paths,
            "seed": seed,
            "alpha": list(weights.alpha),
            "coefficients": coefficients.describe(),
            "horizon": horizon,
            "steps": steps,
            "max_doublings": max_doublings,
            "origin_tol": origin_tol,
        }
        params = {
            "alpha": list(weights.alpha),
            "coefficients": coefficients,
            "start": (eps * weights.as_array()).tolist(),
            "dt": horizon / steps,
            "seed": seed,
            "eps": eps,
            "origin_tol": origin_tol,
            "max_steps": steps << max_doublings,
        }
        merged = _run_batches(_ladder_worker, params, n_paths, workers)
        outcomes = merged["outcome"]
        decided = outcomes != 0
        down = outcomes[decided] == -1
        functional = (1.0 - np.exp(-merged["tv"][decided])) * down
        samples = functional / eps
        summary = McSummary.from_samples(samples, seed, config_hash(cfg))
        results.append(
            LadderBoundResult(
                eps=eps,
                summary=summary,
                down_frequency=float(down.mean()) if down.size else float("nan"),
                capped_fraction=float(1.0 - decided.mean()) if n_paths else 0.0,
                steps=steps,
                dt=horizon / steps,
                functionals=samples,
                outcomes=outcomes,
                config=cfg,
            )
        )
    return results


# ---------------------------------------------------------------------------
# valley Dirichlet trend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValleyDirichletResult:
    levels: tuple[int, ...]
    meshes: tuple[float, ...]
    s2_lateral_medians: tuple[float, ...]
    s1_vertical_medians: tuple[float, ...]
    s2_lateral: np.ndarray
    s1_vertical: np.ndarray
    seed: int
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "experiment": "valley",
            "levels": list(self.levels),
            "meshes": list(self.meshes),
            "s2_lateral_medians": list(self.s2_lateral_medians),
            "s1_vertical_medians": list(self.s1_vertical_medians),
            "seed": self.seed,
            "config": self.config,
        }

    def per_path_rows(self):
        header = ("path_id", "level", "mesh", "component", "p", "sum")
        rows = []
        for pid in range(self.s2_lateral.shape[0]):
            for col, level in enumerate(self.levels):
                rows.append((pid, level, self.meshes[col], "Y1", 2, self.s2_lateral[pid, col]))
                rows.append((pid, level, self.meshes[col], "Y2", 1, self.s1_vertical[pid, col]))
        return header, rows


def _valley_worker(args):
    params, indices = args
    esp = ValleyEsp(ValleyDomain(*params["domain"]))
    coeffs = params["coefficients"]
    sampled, _ = _sampled_push(
        esp,
        coeffs,
        np.asarray(params["start"]),
        params["dt"],
        params["n_steps"],
        params["seed"],
        indices,
        params["stride"],
    )
    strides = params["level_strides"]
    return {
        "s2_lateral": increment_sums(sampled[:, :, :1], strides, 2.0),
        "s1_vertical": increment_sums(sampled[:, :, 1:], strides, 1.0),
    }


def valley_dirichlet_experiment(
    domain: ValleyDomain,
    ladder: PartitionLadder,
    n_paths: int,
    seed: int,
    *,
    coefficients: CoefficientField | None = None,
    steps: int = 2**16,
    workers: int = 1,
) -> ValleyDirichletResult:
    """Quadratic-variation decay of the lateral push from the valley vertex.

    Requires min(alpha_L, alpha_R) >= 1 (wedge or cusp).  The vertical push
    is monotone, so its S_1 is the same at every nested level.
    """
    if min(domain.alpha_l, domain.alpha_r) < 1.0:
        raise DomainError("requires min(alpha_L, alpha_R) >= 1")
    if steps % (1 << ladder.level_max):
        raise DomainError("steps must be divisible by the finest ladder level")
    if coefficients is None:
        coefficients = driftless_identity(2)
    stride = steps // (1 << ladder.level_max)
    level_strides = [1 << (ladder.level_max - n) for n in ladder.levels]
    cfg = {
        "experiment": "valley",
        "domain": [domain.alpha_l, domain.alpha_r, domain.c_l, domain.c_r],
        "horizon": ladder.horizon,
        "levels": [ladder.level_min, ladder.level_max],
        "n_paths": n_paths,
        "seed": seed,
        "coefficients": coefficients.describe(),
        "steps": steps,
    }
    params = {
        "domain": (domain.alpha_l, domain.alpha_r, domain.c_l, domain.c_r),
        "coefficients": coefficients,
        "start": [0.0, 0.0],
        "dt": ladder.horizon / steps,
        "n_steps": steps,
        "stride": stride,
        "level_strides": level_strides,
        "seed": seed,
    }
    merged = _run_batches(_valley_worker, params, n_paths, workers)
    return ValleyDirichletResult(
        levels=tuple(ladder.levels),
        meshes=tuple(ladder.meshes()),
        s2_lateral_medians=tuple(np.median(merged["s2_lateral"], axis=0)),
        s1_vertical_medians=tuple(np.median(merged["s1_vertical"], axis=0)),
        s2_lateral=merged["s2_lateral"],
        s1_vertical=merged["s1_vertical"],
        seed=seed,
        config=cfg,
    )
