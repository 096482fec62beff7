"""Best-available regret of block-restarted sleeping OSMD across horizons.

Example:
    python scripts/regret_scaling.py --horizons 2000 8000 32000 --seeds 0 1 2
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from actor_curator.config import bandit_from_dict, load_yaml
from actor_curator.harness import regret_scaling

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "bandit_abrupt_switch.yaml")
    ap.add_argument("--horizons", nargs="+", type=int)
    ap.add_argument("--seeds", nargs="+", type=int)
    args = ap.parse_args(argv)

    data = load_yaml(args.config)
    horizons = args.horizons or data.pop("horizons", [2000, 8000, 32000])
    seeds = args.seeds or data.pop("seeds", [0])
    data.pop("horizons", None), data.pop("seeds", None)
    rep = regret_scaling(bandit_from_dict(data), horizons, seeds)
    for t, reg, per in zip(rep["horizons"], rep["mean_best_available_regret"], rep["per_step"]):
        print(f"T={t:7d}  regret {reg:10.2f}  regret/T {per:.4f}")
    print(f"log-log slope {rep['slope']:.3f}")
    print(json.dumps(rep))
    return 0


if __name__ == "__main__":
    sys.exit(main())
