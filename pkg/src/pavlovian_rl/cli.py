"""Command-line entry point.

    pavlovian-rl run      --config cfg.json --out results/ [--seed N] [--set key=value]...
    pavlovian-rl compare  --config cfg.json --out results/ [--workers 8]
    pavlovian-rl snapshot --manifest results/run_manifest.json --out again/
    pavlovian-rl validate-map my.map

Exit codes: 0 success, 2 configuration error, 3 map error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, apply_overrides, parse_config
from .env_grid import CellKind, MapError, dump_map, load_map_file
from .experiment import ALL_CONDITIONS, Condition, RunConfig, Scenario, compare, run_training
from .io import MANIFEST_NAME, emit_outputs, emit_run_files

EXIT_OK, EXIT_CONFIG, EXIT_MAP, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("pavlovian_rl")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read_json(path, code) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Fail(code, f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Fail(code, f"{path}: malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise _Fail(code, f"{path}: expected a JSON object")
    return doc


def load_config(path, overrides=(), seed=None) -> RunConfig:
    """Config file (or a run manifest, whose ``config`` is used) plus overrides."""
    doc = {} if path is None else _read_json(path, EXIT_CONFIG)
    if "command" in doc and "config" in doc:
        doc = doc["config"]
    try:
        config = parse_config(apply_overrides(doc, overrides))
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"config error: {exc}") from None
    if seed is not None:
        config = replace(config, base_seed=seed)
    return config


def load_scenario(config: RunConfig) -> Scenario:
    try:
        return Scenario.from_config(config)
    except MapError as exc:
        raise _Fail(EXIT_MAP, f"map error: {exc}") from None
    except OSError as exc:
        raise _Fail(EXIT_MAP, f"map error: cannot read {config.map_path}: {exc.strerror or exc}") from None


def _experiment(args, command):
    config = load_config(args.config, args.set, args.seed)
    scenario = load_scenario(config)
    conditions = ALL_CONDITIONS if command == "compare" else (config.condition,)
    log.info("%s: %s x %d runs x %d episodes", command, ", ".join(c.value for c in conditions),
             config.monte_carlo_runs, config.episodes)
    results = compare(config, conditions, workers=args.workers)
    try:
        files = emit_outputs(results, config, args.out, scenario.grid, dump_map(scenario.grid),
                             command=command, svg=not args.no_svg)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write outputs to {args.out}: {exc.strerror or exc}") from None
    for c, agg in results.items():
        s = agg.steps
        print(f"{c.value:26s} runs={s.shape[0]:3d} first-episode mean={s[:, 0].mean():7.1f} "
              f"last-episode mean={s[:, -1].mean():7.1f}")
    print(f"wrote {len(files)} files to {args.out}")


def _snapshot(args):
    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST_NAME
    manifest = _read_json(path, EXIT_CONFIG)
    try:
        conditions = [Condition(c) for c in manifest["conditions"]]
    except (KeyError, ValueError, TypeError):
        raise _Fail(EXIT_CONFIG, f"{path}: not a run manifest") from None
    config = load_config(path)
    scenario = load_scenario(config)
    want = manifest.get("map_sha256")
    if want:
        have = hashlib.sha256(dump_map(scenario.grid).encode("utf-8")).hexdigest()
        if have != want:
            log.warning("map differs from the one recorded in the manifest; outputs will not match")
    runs = {c: run_training(replace(config, condition=c), config.base_seed, scenario) for c in conditions}
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = emit_run_files(runs, config, scenario.grid, out, svg=not args.no_svg)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write outputs to {out}: {exc.strerror or exc}") from None
    print(f"wrote {len(files)} files to {out}")


def _validate_map(args):
    try:
        grid = load_map_file(args.path)
    except MapError as exc:
        raise _Fail(EXIT_MAP, f"map error: {exc}") from None
    except OSError as exc:
        raise _Fail(EXIT_MAP, f"map error: cannot read {args.path}: {exc.strerror or exc}") from None
    counts = {k.name.lower(): len(grid.cells_of_kind(k)) for k in CellKind}
    print(f"{args.path}: {grid.width}x{grid.height}, {grid.n_agents} agents at "
          f"{list(grid.agent_starts)}, target {grid.target}")
    print("  " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pavlovian-rl", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "Monte Carlo runs of the configured condition"),
                        ("compare", "all four conditions with shared seeds")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config (omitted keys take defaults); a run manifest also works")
        sp.add_argument("--out", required=True, help="output directory (created if absent)")
        sp.add_argument("--seed", type=int, help="override base_seed")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. hyper.gamma=0.95 (repeatable)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for the runs")
        sp.add_argument("--no-svg", action="store_true")
    sp = sub.add_parser("snapshot", help="re-emit fields and trajectories from a run manifest")
    sp.add_argument("--manifest", required=True, help="run_manifest.json or the directory holding it")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-svg", action="store_true")
    sp = sub.add_parser("validate-map", help="check a map file")
    sp.add_argument("path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("run", "compare"):
            if args.workers < 1:
                raise _Fail(EXIT_CONFIG, "--workers must be >= 1")
            _experiment(args, args.command)
        elif args.command == "snapshot":
            _snapshot(args)
        else:
            _validate_map(args)
    except _Fail as exc:
        print(f"pavlovian-rl: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK
