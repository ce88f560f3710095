#!/usr/bin/env python3
"""Monte Carlo validation of the dynamic failure model on a desk-scale table.

Runs one experiment per split and appends the per-split report to a CSV.
Use small a/s (a 12-bit budget) so failures are frequent enough to count.
"""

import argparse
import math
import sys
import time
from pathlib import Path

from cucotrack.harness import ExperimentConfig, ExperimentReport, measure_vs_model
from cucotrack.model import ModelParams, dynamic_failure


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--splits", nargs="+", default=["6,1,5", "6,2,4", "6,3,3", "6,4,2", "6,5,1"])
    ap.add_argument("--buckets", type=int, default=8192, help="buckets per table")
    ap.add_argument("--events", type=float, default=100, help="expected failures to collect per split")
    ap.add_argument("--churn", type=int, default=10_000_000, help="churn steps per construction")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--out", type=Path, default=Path("results/validation.csv"))
    args = ap.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)

    with args.out.open("w") as fh:
        fh.write(ExperimentReport.CSV_HEADER + "\n")
        for text in args.splits:
            f, a, s = (int(x) for x in text.split(","))
            F = dynamic_failure(ModelParams(f, a, s, m=2 * args.buckets))
            n = max(1, math.ceil(args.events / F / args.churn))
            cfg = ExperimentConfig(f, a, s, buckets_per_table=args.buckets, num_constructions=n,
                                   churn_steps=args.churn, seed=args.seed, audit_lookups=1000)
            t = time.perf_counter()
            r = measure_vs_model(cfg, workers=args.workers)
            print(r.summary(), f"({time.perf_counter() - t:.0f} s)\n", file=sys.stderr)
            fh.write(r.csv_row() + "\n")
            fh.flush()


if __name__ == "__main__":
    main()
