"""Command line front end: ``particlegd {fig1,fig2,tensor,circle-net,verify}``.

Each subcommand starts from its packaged preset, applies ``--config``
(YAML), then ``--set key.path=value`` pairs, then ``--seed`` and
``--log-every``. Results go to ``--out`` as ``<name>.csv`` and
``<name>.json``.

Exit codes: 0 success, 1 a check or property failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .experiments import (
    EXPERIMENTS,
    RUNNERS,
    ConfigError,
    ValidationError,
    resolve_config,
    summary_json,
)
from .optim import OptimizationError

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

HELP = {
    "fig1": "PGD convergence on the discrete energy distance (averaged runs, slope fit)",
    "fig2": "approximation error against n for the energy distance to uniform[a, b]",
    "tensor": "recovery of an orthonormal basis by gradient descent on the sphere",
    "circle-net": "zero-one neurons on the circle trained by PGD on their angles",
    "verify": "seeded property suites with pass/fail per property",
}

JSON_NAMES = {"circle-net": "circle_net"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="particlegd",
                                     description="Particle gradient descent experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="YAML file merged over the preset")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--log-every", type=int, help="record every k-th iterate")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config entry, e.g. --set iters=500")
        if name == "verify":
            p.add_argument("--planted", action="store_true",
                           help="also run deliberately broken objectives")
    return parser


def _read_config(path):
    if path is None:
        return {}
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return data


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = _read_config(args.config)
        sets = list(args.set)
        if getattr(args, "planted", False):
            sets.append("planted=true")
        cfg = resolve_config(args.command, user, args.seed, args.log_every, sets)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out
    stem = JSON_NAMES.get(args.command, args.command)
    try:
        result = RUNNERS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}_validation.json").write_text(
            json.dumps(exc.detail, indent=2, sort_keys=True) + "\n")
        print(f"validation failed: {exc}: {exc.detail}", file=sys.stderr)
        return EXIT_FAILED
    except OptimizationError as exc:
        print(f"optimization aborted: {exc}", file=sys.stderr)
        return EXIT_FAILED

    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in result.tables.items():
        with open(out_dir / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    (out_dir / f"{stem}.json").write_text(summary_json(cfg, result), encoding="utf-8")

    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"wrote {out_dir / (stem + '.json')}")
    return EXIT_OK if result.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
