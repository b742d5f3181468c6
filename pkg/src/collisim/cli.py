"""Command-line experiment runner.

One binary, one subcommand per experiment. Config is a JSON file with
sections per module; command-line flags override file values. Every run
writes a deterministic report.json (byte-identical across reruns of the
same config and seed) and a manifest.json that quarantines the timestamp
and wall-clock so byte comparison of reports stays meaningful.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, harness
from .collisions import gaussian_bump
from .rngs import HASH_VERSION

COMMANDS = (
    "collisions", "partition", "chaos", "duality", "expmoment",
    "tightness", "convergence", "kernels-check", "ustat-check",
)

DEFAULT_CONFIG = {
    "run": {
        "seed": None,          # required: reproducibility forbids wall-clock defaults
        "out": "runs/out",
        "replicas": 10_000,
        "env_replicas": 2_000,
        "workers": 1,
        "raw": False,
    },
    "walks": {
        "k": 3,
        "n_ladder": [64, 256, 1024],
        "m_ladder": [2, 4, 8, 16],
    },
    "environment": {},
    "harness": {
        "alpha": 0.5,
        "sigma": 1.0,
        "beta": 1.0,
        "family": "polymer",
        "with_chaos_target": False,
        "thresholds": {
            "gap_factor": 2.0,
            "plateau_sigma": 3.0,
            "tail_prob": 0.01,
            "norm_tol_rel": 0.01,
            "moment_sigma": 3.0,
        },
        "env_budget": 2_000_000,
        "norm_samples": 1_000_000,
        "clt_budget": 120_000,
        "max_order": 4,
    },
    "chaos": {
        "gamma": 0.7071067811865476,
        "time_cells": 32,
        "dx": 0.175,
        "cutoff": 6.0,
        "order": 6,
        "replicas": 1_000,
    },
}


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(f"unknown config field: {where}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val, where)
        else:
            out[key] = val
    return out


def parse_seed(text) -> int:
    """Seeds are accepted as decimal or hex strings (or plain ints)."""
    if isinstance(text, int):
        return text
    try:
        return int(str(text), 0)
    except ValueError as exc:
        raise ConfigError(f"run.seed: cannot parse {text!r} as an integer") from exc


def validate(cfg: dict) -> dict:
    run = cfg["run"]
    if run["seed"] is None:
        raise ConfigError("run.seed: a seed is required (no wall-clock default)")
    run["seed"] = parse_seed(run["seed"])
    for field in ("replicas", "env_replicas", "workers"):
        if int(run[field]) < 1:
            raise ConfigError(f"run.{field}: must be a positive integer")
        run[field] = int(run[field])
    walks = cfg["walks"]
    if int(walks["k"]) < 2:
        raise ConfigError("walks.k: need k >= 2")
    walks["k"] = int(walks["k"])
    ladder = [int(n) for n in walks["n_ladder"]]
    if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("walks.n_ladder: must be a strictly increasing list")
    if any(n < 1 for n in ladder):
        raise ConfigError("walks.n_ladder: horizons must be >= 1")
    walks["n_ladder"] = ladder
    mlad = [float(m) for m in walks["m_ladder"]]
    if any(b <= a for a, b in zip(mlad, mlad[1:])):
        raise ConfigError("walks.m_ladder: must be strictly increasing")
    walks["m_ladder"] = mlad
    hz = cfg["harness"]
    if float(hz["sigma"]) <= 0:
        raise ConfigError("harness.sigma: must be > 0")
    if float(hz["beta"]) < 0:
        raise ConfigError("harness.beta: must be >= 0")
    ch = cfg["chaos"]
    if int(ch["time_cells"]) < 1:
        raise ConfigError("chaos.time_cells: must be >= 1")
    if float(ch["dx"]) <= 0 or float(ch["cutoff"]) <= 0:
        raise ConfigError("chaos.dx / chaos.cutoff: must be > 0")
    if float(ch["dx"]) > math.sqrt(1.0 / int(ch["time_cells"])) + 1e-12:
        raise ConfigError("chaos.dx: need dx <= sqrt(dt) for stable kernels")
    if int(ch["order"]) < 0:
        raise ConfigError("chaos.order: must be >= 0")
    return cfg


def load_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {args.config}: {exc}") from exc
        cfg = _merge(cfg, file_cfg)
    # flags win over file values
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.out is not None:
        cfg["run"]["out"] = args.out
    if args.replicas is not None:
        cfg["run"]["replicas"] = args.replicas
    if args.workers is not None:
        cfg["run"]["workers"] = args.workers
    if args.raw:
        cfg["run"]["raw"] = True
    return validate(cfg)


def _test_function(cfg):
    hz = cfg["harness"]
    return gaussian_bump(float(hz["alpha"]), float(hz["sigma"]))


def _chaos_target_summary(cfg, f):
    """E[Z_{sqrt(2f)}^k] from the grid simulator, as a summary the duality
    verdict can hold against its largest-horizon estimate."""
    from .chaos import WhiteNoiseGrid, estimate_Z_moments
    from .environment import ContinuumAmplitude

    ch, k = cfg["chaos"], cfg["walks"]["k"]
    amp = ContinuumAmplitude(
        lambda t, x: np.sqrt(2.0 * np.asarray(f(t, x), dtype=float)),
        math.sqrt(2.0 * max(f.bound, 0.0)))
    grid = WhiteNoiseGrid(int(ch["time_cells"]), float(ch["dx"]), float(ch["cutoff"]))
    rep = estimate_Z_moments(amp, grid, int(ch["order"]), k, int(ch["replicas"]),
                             cfg["run"]["seed"] + 99)
    return harness.MonteCarloSummary(
        rep.n_replicas, float(rep.moments[k - 1]), float(rep.stderrs[k - 1]),
        (float(rep.moments[k - 1] - 2.576 * rep.stderrs[k - 1]),
         float(rep.moments[k - 1] + 2.576 * rep.stderrs[k - 1])))


def dispatch(command: str, cfg: dict) -> harness.ExperimentReport:
    run, walks, hz, ch = cfg["run"], cfg["walks"], cfg["harness"], cfg["chaos"]
    seed = run["seed"]
    workers = run["workers"]
    thresholds = hz["thresholds"]
    f = _test_function(cfg)
    if command == "collisions":
        return harness.collision_experiment(walks["k"], walks["n_ladder"][-1],
                                            run["replicas"], seed, f, workers)
    if command == "partition":
        return harness.partition_experiment(
            walks["n_ladder"], walks["k"], f, run["env_replicas"], seed,
            plateau_sigma=thresholds["plateau_sigma"], env_budget=hz["env_budget"])
    if command == "chaos":
        return harness.chaos_experiment(
            ch["gamma"], ch["time_cells"], ch["dx"], ch["cutoff"], ch["order"],
            ch["replicas"], seed, moment_sigma=thresholds["moment_sigma"])
    if command == "duality":
        chaos_target = None
        if hz["with_chaos_target"]:
            chaos_target = _chaos_target_summary(cfg, f)
        return harness.duality_experiment(
            walks["k"], f, walks["n_ladder"], run["replicas"], run["env_replicas"],
            seed, workers, chaos_target=chaos_target,
            gap_factor=thresholds["gap_factor"])
    if command == "expmoment":
        return harness.exponential_moment_probe(
            hz["beta"], walks["n_ladder"], run["replicas"], seed, workers,
            plateau_sigma=thresholds["plateau_sigma"])
    if command == "tightness":
        return harness.tightness_probe(
            walks["k"], walks["n_ladder"], walks["m_ladder"], run["replicas"],
            seed, workers, tail_prob=thresholds["tail_prob"])
    if command == "convergence":
        return harness.convergence_study(
            walks["k"], f, walks["n_ladder"], run["replicas"], seed, workers)
    if command == "kernels-check":
        return harness.kernels_check(
            hz["max_order"], hz["norm_samples"], walks["n_ladder"], hz["clt_budget"],
            seed, norm_tol_rel=thresholds["norm_tol_rel"])
    if command == "ustat-check":
        return harness.ustat_check(walks["n_ladder"][0], max(run["replicas"], 1000), seed)
    raise ConfigError(f"command: unknown command {command!r}")


def write_outputs(report: harness.ExperimentReport, cfg: dict, command: str,
                  elapsed: float, to_stdout: bool) -> Path:
    out_dir = Path(cfg["run"]["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    doc["schema"] = 1
    doc["command"] = command
    doc["seed"] = cfg["run"]["seed"]
    report_text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    (out_dir / "report.json").write_text(report_text)
    manifest = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": elapsed,
        "command": command,
        "seed": cfg["run"]["seed"],
        "artifact_version": __version__,
        "hash_function": HASH_VERSION,
        "report_schema": 1,
        "config": cfg,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    if cfg["run"]["raw"] and report.raw:
        raw_dir = out_dir / "raw"
        raw_dir.mkdir(exist_ok=True)
        for key, values in report.raw.items():
            lines = [f"# collisim={__version__} hash={HASH_VERSION} "
                     f"command={command} seed={cfg['run']['seed']}", "value"]
            lines += [repr(float(v)) for v in np.asarray(values).ravel()]
            (raw_dir / f"{key}.csv").write_text("\n".join(lines) + "\n")
    if to_stdout:
        sys.stdout.write(report_text)
    return out_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collisim",
        description="Collision-measure and polymer partition-function experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file with per-module sections")
    parser.add_argument("--seed", type=parse_seed, help="master seed (decimal or hex)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--replicas", type=int, help="walk-side replicate count")
    parser.add_argument("--workers", type=int, help="worker pool size")
    parser.add_argument("--raw", action="store_true", help="write per-replicate CSVs")
    parser.add_argument("--stdout", action="store_true",
                        help="print the machine-readable report to stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    started = time.perf_counter()
    print(f"running {args.command} (seed={cfg['run']['seed']})", file=sys.stderr)
    report = dispatch(args.command, cfg)
    elapsed = time.perf_counter() - started
    out_dir = write_outputs(report, cfg, args.command, elapsed, args.stdout)
    for line in report.lines():
        print(line, file=sys.stderr)
    print(f"report written to {out_dir} ({elapsed:.1f}s)", file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
