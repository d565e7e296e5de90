"""Command-line front end.

Commands: simulate | variation | hitting | blowup | ladder | valley | xi-check.

Configuration is a flat key=value file fully mirrored by flags; flags
override the file, the file overrides defaults.  REFLECTOLAB_SEED is the
seed fallback when neither supplies one.  Each run writes result.json,
per_path.csv (where applicable) and manifest.json into a directory named by
the config hash; identical config + seed reproduce byte-identical artifacts
(timestamps live only in the manifest).

Exit codes: 0 success, 2 config error, 3 solver/numerical failure,
4 capacity error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .domains import GpsOrthant, GpsWeights, HalfLine, ValleyDomain, ValleyEsp
from .errors import (
    CapacityError,
    CoefficientBoundError,
    ConfigError,
    DomainError,
    GridError,
    IntervalError,
    ReflectolabError,
    UnsolvableStepError,
)
from .experiments import (
    config_hash,
    hitting_probability_experiment,
    ladder_lower_bound_experiment,
    push_variation_ensemble,
    valley_dirichlet_experiment,
    variation_blowup_experiment,
)
from .maps import xi_map, xi_map_reference
from .paths import FLOAT_FMT, Path, path_to_csv, uniform_grid
from .sder import (
    EulerConfig,
    SderSpec,
    constant_drift,
    driftless_identity,
    euler_sder,
    linear_drift,
    occupation_fraction,
    path_rng,
)
from .variation import PartitionLadder

COMMANDS = ("simulate", "variation", "hitting", "blowup", "ladder", "valley", "xi-check")

# key -> (type, default); this is the full flat configuration schema.
SCHEMA = {
    "command": ("str", None),
    "seed": ("int", None),
    "paths": ("int", 1000),
    "steps": ("int", 4096),
    "horizon": ("float", 1.0),
    "eps": ("floats", (0.25,)),
    "alpha": ("floats", (0.5, 0.5)),
    "valley": ("floats", (1.0, 1.0, 1.0, 1.0)),
    "esp": ("str", "gps"),
    "coeff": ("str", "driftless-identity"),
    "drift": ("floats", ()),
    "drift-matrix": ("str", ""),
    "initial": ("floats", ()),
    "level-min": ("int", 6),
    "level-max": ("int", 12),
    "stop-level": ("float", 0.5),
    "cases": ("int", 1000),
    "n": ("int", 1024),
    "workers": ("int", 0),  # 0 -> available parallelism
    "out": ("str", "runs"),
}


def _parse_value(key: str, raw: str):
    kind = SCHEMA[key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "floats":
            raw = raw.strip()
            return tuple(float(tok) for tok in raw.split(",")) if raw else ()
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key}={raw!r} as {kind}") from exc


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectolab",
        description="Reflected diffusions via the extended Skorokhod problem.",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="what to run")
    parser.add_argument("--config", help="flat key=value configuration file")
    for key, (kind, _) in SCHEMA.items():
        if key == "command":
            continue
        parser.add_argument(f"--{key}", dest=key, default=None, metavar=kind.upper())
    return parser


def resolve_config(argv) -> dict:
    parser = _build_parser()
    args = parser.parse_args(argv)
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    if args.config:
        cfg.update(_read_config_file(args.config))
    for key in SCHEMA:
        if key == "command":
            continue
        raw = getattr(args, key)
        if raw is not None:
            cfg[key] = _parse_value(key, str(raw))
    if args.command is not None:
        cfg["command"] = args.command
    if cfg["command"] is None:
        parser.print_usage(sys.stderr)
        raise ConfigError("no command given (positional argument or config key)")
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {cfg['command']!r}")
    if cfg["seed"] is None:
        env = os.environ.get("REFLECTOLAB_SEED")
        cfg["seed"] = int(env) if env else 0
    if cfg["workers"] == 0:
        cfg["workers"] = os.cpu_count() or 1
    return cfg


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _build_esp(cfg):
    kind = cfg["esp"]
    if kind == "half-line":
        return HalfLine()
    if kind == "gps":
        return GpsOrthant(GpsWeights(tuple(cfg["alpha"])))
    if kind == "valley":
        v = cfg["valley"]
        if len(v) != 4:
            raise ConfigError("valley needs four comma-separated values aL,aR,cL,cR")
        return ValleyEsp(ValleyDomain(*v))
    raise ConfigError(f"unknown esp {kind!r}")


def _build_coefficients(cfg, dim: int):
    name = cfg["coeff"]
    if name == "driftless-identity":
        return driftless_identity(dim)
    if name == "constant-drift":
        vec = cfg["drift"] or (0.0,) * dim
        if len(vec) != dim:
            raise ConfigError(f"drift vector needs {dim} entries")
        return constant_drift(vec)
    if name == "linear-drift":
        raw = cfg["drift-matrix"]
        if not raw:
            raise ConfigError("linear-drift needs --drift-matrix 'a,b;c,d'")
        rows = [[float(x) for x in row.split(",")] for row in raw.split(";")]
        mat = np.asarray(rows)
        if mat.shape != (dim, dim):
            raise ConfigError(f"drift matrix must be {dim}x{dim}, got {mat.shape}")
        return linear_drift(mat)
    raise ConfigError(f"unknown coefficient preset {name!r}")


def _initial(cfg, dim: int):
    init = cfg["initial"]
    if not init:
        return (0.0,) * dim
    if len(init) != dim:
        raise ConfigError(f"initial point needs {dim} entries")
    return tuple(init)


def _ladder(cfg) -> PartitionLadder:
    return PartitionLadder(cfg["horizon"], cfg["level-min"], cfg["level-max"])


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def _write_csv(path: FsPath, header, rows) -> None:
    with path.open("w") as fp:
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join(_fmt_cell(cell) for cell in row) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_simulate(cfg, outdir: FsPath) -> dict:
    esp = _build_esp(cfg)
    spec = SderSpec(esp, _build_coefficients(cfg, esp.dim), _initial(cfg, esp.dim))
    config = EulerConfig(horizon=cfg["horizon"], steps=cfg["steps"], seed=cfg["seed"])
    bundle = euler_sder(spec, config)
    for name, component in (("B", bundle.b), ("X", bundle.x), ("Z", bundle.z), ("Y", bundle.y)):
        with (outdir / f"{name}.csv").open("w") as fp:
            path_to_csv(component, fp)
    return {
        "experiment": "simulate",
        "spec_hash": spec.spec_hash(),
        "seed": cfg["seed"],
        "steps": cfg["steps"],
        "horizon": cfg["horizon"],
        "terminal_z": bundle.z.values[-1].tolist(),
        "terminal_y": bundle.y.values[-1].tolist(),
        "boundary_occupation_1e-3": occupation_fraction(bundle.z, esp, 1e-3),
    }


def _cmd_variation(cfg, outdir: FsPath) -> dict:
    esp = _build_esp(cfg)
    result = push_variation_ensemble(
        esp,
        _build_coefficients(cfg, esp.dim),
        _initial(cfg, esp.dim),
        _ladder(cfg),
        cfg["steps"],
        cfg["paths"],
        cfg["seed"],
        workers=cfg["workers"],
    )
    header, rows = result.per_path_rows()
    _write_csv(outdir / "per_path.csv", header, rows)
    return result.to_json_dict()


def _cmd_hitting(cfg, outdir: FsPath) -> dict:
    if len(cfg["eps"]) != 1:
        raise ConfigError("hitting takes a single eps")
    result = hitting_probability_experiment(
        cfg["eps"][0],
        cfg["paths"],
        cfg["seed"],
        weights=GpsWeights(tuple(cfg["alpha"])),
        steps=cfg["steps"],
        horizon=cfg["horizon"],
        workers=cfg["workers"],
    )
    header, rows = result.per_path_rows()
    _write_csv(outdir / "per_path.csv", header, rows)
    return result.to_json_dict()


def _cmd_blowup(cfg, outdir: FsPath) -> dict:
    result = variation_blowup_experiment(
        cfg["horizon"],
        _ladder(cfg),
        cfg["paths"],
        cfg["seed"],
        weights=GpsWeights(tuple(cfg["alpha"])),
        steps=cfg["steps"],
        comparison_stop_level=cfg["stop-level"],
        workers=cfg["workers"],
    )
    header, rows = result.per_path_rows()
    _write_csv(outdir / "per_path.csv", header, rows)
    return result.to_json_dict()


def _cmd_ladder(cfg, outdir: FsPath) -> dict:
    results = ladder_lower_bound_experiment(
        cfg["eps"],
        cfg["paths"],
        cfg["seed"],
        weights=GpsWeights(tuple(cfg["alpha"])),
        horizon=cfg["horizon"],
        workers=cfg["workers"],
    )
    rows = []
    for res in results:
        _, per_path = res.per_path_rows()
        rows.extend((res.eps, *row) for row in per_path)
    _write_csv(outdir / "per_path.csv", ("eps", "path_id", "outcome", "functional"), rows)
    return {"experiment": "ladder", "entries": [r.to_json_dict() for r in results]}


def _cmd_valley(cfg, outdir: FsPath) -> dict:
    v = cfg["valley"]
    result = valley_dirichlet_experiment(
        ValleyDomain(*v),
        _ladder(cfg),
        cfg["paths"],
        cfg["seed"],
        steps=cfg["steps"],
        workers=cfg["workers"],
    )
    header, rows = result.per_path_rows()
    _write_csv(outdir / "per_path.csv", header, rows)
    return result.to_json_dict()


def _xi_case(seed: int, case: int, n: int):
    """Seeded (psi, ell, r) triples mixing generic, valley and degenerate barriers."""
    rng = path_rng(seed, case, stream=7)
    grid = uniform_grid(1.0, n - 1)
    scale = np.sqrt(1.0 / (n - 1))
    kind = case % 3
    if kind == 0:
        base = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
        gap_lo = np.abs(np.concatenate([[0.5], np.cumsum(rng.standard_normal(n - 1))]) * scale) + 0.05
        gap_hi = np.abs(np.concatenate([[0.5], np.cumsum(rng.standard_normal(n - 1))]) * scale) + 0.05
        ell, r = base - gap_lo, base + gap_hi
        psi = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
        psi = psi - psi[0] + (ell[0] + r[0]) / 2.0
    elif kind == 1:
        # barriers from a simulated cusp valley height
        height = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
        z2 = height + np.maximum(0.0, -np.minimum.accumulate(height))
        ell, r = -(z2**2), z2**2
        psi = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
    else:
        # touching barriers: ell = r wherever the two walks cross
        w1 = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
        w2 = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
        ell, r = np.minimum(w1, w2), np.maximum(w1, w2)
        psi = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * scale
        psi = psi - psi[0] + (ell[0] + r[0]) / 2.0
    return Path(grid, psi), Path(grid, ell), Path(grid, r)


def _cmd_xi_check(cfg, outdir: FsPath) -> dict:
    tolerance = 1e-10
    worst = 0.0
    for case in range(cfg["cases"]):
        psi, ell, r = _xi_case(cfg["seed"], case, cfg["n"])
        fast = xi_map(psi, ell, r)
        slow = xi_map_reference(psi, ell, r)
        worst = max(worst, float(np.max(np.abs(fast.values - slow.values))))
    doc = {
        "experiment": "xi-check",
        "cases": cfg["cases"],
        "length": cfg["n"],
        "max_abs_deviation": worst,
        "tolerance": tolerance,
        "pass": worst <= tolerance,
    }
    if not doc["pass"]:
        raise ReflectolabError(
            f"xi-check failed: max deviation {worst} exceeds {tolerance}"
        )
    return doc


_RUNNERS = {
    "simulate": _cmd_simulate,
    "variation": _cmd_variation,
    "hitting": _cmd_hitting,
    "blowup": _cmd_blowup,
    "ladder": _cmd_ladder,
    "valley": _cmd_valley,
    "xi-check": _cmd_xi_check,
}


def run(cfg: dict) -> FsPath:
    """Execute a resolved configuration; returns the run directory."""
    digest = config_hash({k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()})
    outdir = FsPath(cfg["out"]) / f"run-{digest[:8]}"
    outdir.mkdir(parents=True, exist_ok=True)
    result = _RUNNERS[cfg["command"]](cfg, outdir)
    with (outdir / "result.json").open("w") as fp:
        json.dump(result, fp, sort_keys=True, indent=2)
        fp.write("\n")
    manifest = {
        "tool": "reflectolab",
        "version": __version__,
        "command": cfg["command"],
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()},
        "config_hash": digest,
        "seed": cfg["seed"],
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with (outdir / "manifest.json").open("w") as fp:
        json.dump(manifest, fp, sort_keys=True, indent=2)
        fp.write("\n")
    return outdir


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        outdir = run(cfg)
    except (ConfigError, DomainError, GridError, IntervalError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 4
    except (UnsolvableStepError, CoefficientBoundError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except ReflectolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(outdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
