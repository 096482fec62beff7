"""Command-line entry point: curriculum, bandit, verify and sweep subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import (
    apply_overrides,
    bandit_from_dict,
    config_from_dict,
    config_to_dict,
    default_output_dir,
    load_yaml,
)
from .errors import ConfigurationError
from .harness import SUITES, regret_scaling, rows_to_csv, run_bandit, run_curriculum, sweep, verify

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("actor_curator")


def _load(args) -> dict:
    data = load_yaml(args.config) if args.config else {}
    return apply_overrides(data, args.override)


def _out_dir(args, data: dict | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if data and data.get("output"):
        return Path(data["output"])
    return default_output_dir()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cmd_curriculum(args) -> int:
    data = _load(args)
    config = config_from_dict(data)
    seeds = [args.seed] if args.seed is not None else config.seeds
    out = _out_dir(args, data)
    for seed in seeds:
        res = run_curriculum(config, seed=seed, out_dir=out)
        log.info("seed %d: final J %.4f, steps to threshold %s", seed, res.summary["final_j"],
                 res.summary["steps_to_threshold"])
        print(json.dumps(res.summary, sort_keys=True))
    return EXIT_OK


def cmd_bandit(args) -> int:
    data = _load(args)
    horizons = data.pop("horizons", None)
    seeds = data.pop("seeds", None)
    drift_estimate = data.pop("drift_estimate", None)
    if args.seed is not None:
        data["seed"] = args.seed
    config = bandit_from_dict(data)
    if horizons:
        summary = regret_scaling(config, horizons, seeds or [config.seed])
    else:
        summary = run_bandit(config, drift_estimate=drift_estimate)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(summary, indent=2, sort_keys=True, default=_json_default)
    (out / f"bandit_seed{config.seed}.json").write_text(text)
    print(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    report = verify(args.suite, **kwargs)
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    for name, res in report.items():
        if isinstance(res, dict):
            print(f"{name}: {'PASS' if res['passed'] else 'FAIL'}")
    print(f"overall: {'PASS' if report['passed'] else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_sweep(args) -> int:
    data = _load(args)
    try:
        template = data["template"]
        grid = data["grid"]
    except KeyError as exc:
        raise ConfigurationError(f"sweep config needs a {exc.args[0]!r} section") from None
    seeds = [args.seed] if args.seed is not None else data.get("seeds", [0])
    rows = sweep(template, grid, seeds, kind=data.get("kind", "curriculum"), workers=args.workers)
    out = _out_dir(args)
    path = out if out.suffix == ".csv" else out / "sweep.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows))
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actor-curator", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        p.add_argument("--out", help="output directory (default: $ACTOR_CURATOR_OUT or ./runs)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path override, e.g. curator.eta=30; repeatable")

    p = sub.add_parser("curriculum", help="run the curriculum loop")
    common(p)
    p.set_defaults(func=cmd_curriculum)

    p = sub.add_parser("bandit", help="run sleeping OSMD on a synthetic loss process")
    common(p)
    p.set_defaults(func=cmd_bandit)

    p = sub.add_parser("verify", help="run the statistical and enumeration checks")
    p.add_argument("suite", nargs="?", default="all", choices=(*SUITES, "all"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid x seeds sweep to a CSV table")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
