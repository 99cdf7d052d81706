"""Command-line entry point.

Subcommands ``ingest``, ``join``, ``analyze``, ``model`` and ``robustness``
run the pipeline through that stage; ``run`` runs all of it; ``synth``
writes a synthetic fixture together with a config pointing at it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .econometrics import NonInteriorMaximumError
from .pipeline import (
    EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, STAGES, ConfigError, DataError,
    run_pipeline, validate_config,
)
from .synth import SyntheticParams, generate_synthetic

log = logging.getLogger("rentrep")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rentrep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true")

    for name in (*STAGES, "run"):
        p = sub.add_parser(name, parents=[common],
                           help="full pipeline" if name == "run" else f"run through {name}")
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--city", action="append", default=None,
                       help="restrict to this city_id (repeatable)")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic fixture")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cities", type=int, default=SyntheticParams.n_cities)
    p.add_argument("--grid", type=int, default=SyntheticParams.grid)
    p.add_argument("--bias", type=float, default=SyntheticParams.bias)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("validate", parents=[common], help="check a config and echo it")
    p.add_argument("--config", required=True, type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "synth":
        params = SyntheticParams(seed=args.seed, n_cities=args.cities, grid=args.grid,
                                 bias=args.bias)
        try:
            info = generate_synthetic(args.out, params)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        config = {
            "inputs": {k: Path(v).name for k, v in info["paths"].items() if k != "truth"},
            "output": "out",
            "seed": args.seed,
            "threads": args.threads,
        }
        (args.out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=True))
        print(json.dumps({k: v for k, v in info.items() if k != "paths"}, sort_keys=True))
        return EXIT_OK

    try:
        cfg = validate_config(args.config)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(yaml.safe_dump(cfg.to_dict(), sort_keys=True), end="")
        return EXIT_OK

    overrides = {}
    if args.out is not None:
        overrides["output"] = str(args.out.resolve())
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            print("config error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        overrides["threads"] = args.threads
    if args.city:
        overrides["cities_filter"] = list(args.city)
    cfg = dataclasses.replace(cfg, **overrides)

    through = "robustness" if args.command == "run" else args.command
    try:
        manifest = run_pipeline(cfg, through)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, NonInteriorMaximumError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(manifest["counts"], sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
