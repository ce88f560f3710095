#!/usr/bin/env python3
"""Analytical sweeps: every fingerprint split per bit budget, plus an occupancy scan.

Writes sweep_<bits>.csv (all splits) and occupancy_<bits>.csv (best split per
budget vs occupancy) into the output directory.
"""

import argparse
from pathlib import Path

from cucotrack.model import ModelParams, dynamic_failure, expected_unresolvable, sweep, sweep_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bits", type=int, nargs="+", default=[12, 14, 16])
    ap.add_argument("--cells", type=int, default=4)
    ap.add_argument("--m", type=int, default=1 << 20, help="total buckets in both tables")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    for b in args.bits:
        rows = sweep(b, o=0.95, c=args.cells, m=args.m)
        (args.out / f"sweep_{b}.csv").write_text(sweep_csv(rows))
        best = min(rows, key=lambda r: r.F)
        print(f"{b} bits: lowest F at f={best.f_bits} a={best.a_bits} s={best.s_bits}: F={best.F:.3e} N={best.N:.3e}")

        lines = ["occupancy,f_bits,a_bits,s_bits,N,F"]
        for pct in range(5, 101, 5):
            p = ModelParams(best.f_bits, best.a_bits, best.s_bits, o=pct / 100, c=args.cells, m=args.m)
            lines.append(f"{pct / 100},{p.f_bits},{p.a_bits},{p.s_bits},{expected_unresolvable(p):.5e},{dynamic_failure(p):.5e}")
        (args.out / f"occupancy_{b}.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}/")


if __name__ == "__main__":
    main()
