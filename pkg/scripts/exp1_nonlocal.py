#!/usr/bin/env python3
"""Desk-scale non-local comparison (compressed reshuffling vs with-replacement
baselines, with and without shift learning) on the mushrooms dataset.

Equivalent to ``rrsim reproduce exp1``; pass --full for the 5000-epoch
protocol with the complete multiplier grid.
"""

import argparse
from pathlib import Path

from rrsim.harness import reproduce_exp1


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--data-dir", default="data")
    ap.add_argument("--out", default="runs/exp1")
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()
    data = Path(args.data_dir) / "mushrooms"
    if not data.exists():
        print(f"missing {data}; run scripts/fetch_datasets.py first")
        return 3
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = reproduce_exp1(data, out_dir=out, full=args.full, seeds=args.seeds)
    for name, info in results.items():
        print(f"{name:12s} best_multiplier={info['best_multiplier']:<8g} "
              f"final_f_gap={info['final_f_gap']:.6e}")
    print(f"curves written to {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
