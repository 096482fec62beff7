"""Run several curators on the prerequisite bank over paired seeds and tabulate the results.

Example:
    python scripts/compare_curators.py --curators uniform tabular_osmd approx_clipped --seeds 0 1 2
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from actor_curator.config import config_from_dict, load_yaml
from actor_curator.harness import run_curriculum

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "curriculum_prerequisite.yaml")
    ap.add_argument("--presets", default=ROOT / "configs" / "curator_presets.yaml")
    ap.add_argument("--curators", nargs="+",
                    default=["uniform", "tabular_osmd", "approx_clipped", "abs_adv", "regression"])
    ap.add_argument("--seeds", nargs="+", type=int, default=list(range(20)))
    ap.add_argument("--csv", help="write per-run rows here")
    args = ap.parse_args(argv)

    base = load_yaml(args.config)
    presets = load_yaml(args.presets)
    base["record_feedback"] = False
    rows = []
    for name in args.curators:
        config = config_from_dict({**base, "curator": presets[name]})
        for seed in args.seeds:
            s = run_curriculum(config, seed=seed).summary
            rows.append({"curator": name, "seed": seed, "final_j": s["final_j"],
                         "steps_to_threshold": s["steps_to_threshold"],
                         "difficulty_first_quartile": s["difficulty_first_quartile"],
                         "difficulty_last_quartile": s["difficulty_last_quartile"]})
            print(f"{name:16s} seed {seed:3d}  final J {s['final_j']:.4f}  steps {s['steps_to_threshold']}",
                  flush=True)

    horizon = base.get("total_steps", 200)
    print(f"\n{'curator':16s} {'median steps':>13s} {'median final J':>15s}")
    for name in args.curators:
        mine = [r for r in rows if r["curator"] == name]
        steps = [horizon + 1 if r["steps_to_threshold"] is None else r["steps_to_threshold"] for r in mine]
        print(f"{name:16s} {np.median(steps):13.1f} {np.median([r['final_j'] for r in mine]):15.4f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
