"""Grid sweep driven by a YAML file with ``template``, ``grid``, ``seeds`` and ``kind`` keys.

Example:
    python scripts/eta_sweep.py configs/sweep_tabular_eta.yaml --out runs/eta.csv
"""

from __future__ import annotations

import argparse
import sys

from actor_curator.config import load_yaml
from actor_curator.harness import rows_to_csv, sweep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default="sweep.csv")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    data = load_yaml(args.config)
    rows = sweep(data["template"], data["grid"], data.get("seeds", [0]),
                 kind=data.get("kind", "curriculum"), workers=args.workers)
    text = rows_to_csv(rows)
    with open(args.out, "w") as fh:
        fh.write(text)
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
