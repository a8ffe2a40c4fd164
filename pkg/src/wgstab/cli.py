"""Command-line scenario runner.

    wgstab <subcommand> [--config PATH] [--seed N] [--out DIR] [--threads N] [--format csv|json]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .dynamics import IntegrationError, SpectrumError, SteadyStateError
from .scenarios import SCENARIOS, SCHEMA_VERSION, ConfigError, ResultBundle, run, scenario_config, validate_config
from .tomography.field import FilterOptimizationError
from .tomography.gain import GainCalibrationError
from .tomography.mle import ReconstructionError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (
    SteadyStateError,
    IntegrationError,
    SpectrumError,
    ReconstructionError,
    FilterOptimizationError,
    GainCalibrationError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scenario config")
    common.add_argument("--seed", type=int, help="overrides the config seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweep points")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    p = argparse.ArgumentParser(prog="wgstab", description="Waveguide dark-state stabilization scenarios")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        sub.add_parser(name, parents=[common], help=f"run the {name} scenario")
    sub.add_parser("validate-config", parents=[common], help="check a config file and exit")
    return p


def _load(path: Path | None, command: str) -> dict:
    if path is None:
        if command == "validate-config":
            raise ConfigError("validate-config needs --config")
        return {"schema_version": SCHEMA_VERSION, "scenario": command}
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def write_csv(path: Path, columns: dict) -> None:
    cols = {k: np.asarray(v).ravel() for k, v in columns.items()}
    lengths = {len(v) for v in cols.values()}
    if len(lengths) != 1:
        raise ValueError(f"{path.name}: columns differ in length {sorted(lengths)}")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([repr(float(x)) for x in row])


def write_bundle(bundle: ResultBundle, out: Path, fmt: str = "csv") -> Path:
    """Write the curves (CSV per curve, or one JSON) plus a manifest; returns the manifest path."""
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if fmt == "csv":
        for name, cols in bundle.curves.items():
            f = out / f"{bundle.scenario}_{name}.csv"
            write_csv(f, cols)
            files.append(f.name)
    else:
        f = out / f"{bundle.scenario}.json"
        f.write_text(json.dumps(bundle.to_dict(), indent=1, sort_keys=True))
        files.append(f.name)
    d = bundle.to_dict()
    manifest = {
        "scenario": bundle.scenario,
        "files": files,
        "summary": d["summary"],
        "metadata": d["metadata"],
    }
    m = out / f"{bundle.scenario}_manifest.json"
    m.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return m


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        doc = _load(args.config, args.command)
        if args.command == "validate-config":
            sc = scenario_config(doc)
            print(f"ok: {args.config} ({sc.scenario}, preset {sc.preset})")
            return EXIT_OK
        validate_config(doc)
        if doc["scenario"] != args.command:
            raise ConfigError(f"config is for scenario {doc['scenario']!r}, not {args.command!r}")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        sc = scenario_config(doc, seed=args.seed, threads=args.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        bundle = run(sc)
    except NUMERIC_ERRORS as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    m = write_bundle(bundle, args.out, args.format)
    print(f"{sc.scenario}: wrote {m} (payload sha256 {bundle.digest()[:16]})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
