"""Command line: ``cucotrack analyze | simulate | gen-trace``.

Exit codes: 0 success, 1 usage error, 2 a simulated construction hit TABLE_FULL.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .harness import MAX_OCCUPANCY, ExperimentConfig, measure_vs_model
from .hashing import FingerprintConfig, FiveTuple, encode_five_tuple
from .model import SplitConstraints, sweep, sweep_csv
from .table import CuCoTrack

EXIT_OK, EXIT_USAGE, EXIT_TABLE_FULL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _split(text: str) -> tuple[int, int, int]:
    try:
        cfg = FingerprintConfig.from_split(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return cfg.f_bits, cfg.a_bits, cfg.s_bits


def _budgets(text: str) -> list[int]:
    try:
        return [int(b) for b in text.split(",") if b]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a bit budget list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cucotrack", description="Compressed cuckoo connection tracking: model and simulation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="closed-form N and F over bit splits")
    a.add_argument("--bits", type=_budgets, action="extend", help="bit budget(s), e.g. --bits 12,14 (default 12,14,16)")
    a.add_argument("--occupancy", type=float, default=0.95)
    a.add_argument("--cells", type=int, default=4)
    a.add_argument("--buckets", type=int, default=1 << 19, help="buckets per table (m = 2 x buckets)")
    a.add_argument("--min-f", type=int, default=6)
    a.add_argument("--max-f", type=int)
    a.add_argument("--min-s", type=int, default=0)
    a.add_argument("--out", type=Path, help="directory for sweep_<bits>.csv files (default: stdout)")

    s = sub.add_parser("simulate", help="Monte Carlo build + churn experiment")
    s.add_argument("--buckets", type=int, default=8192, help="buckets per table")
    s.add_argument("--cells", type=int, default=4)
    s.add_argument("--bits", type=int, help="total fingerprint bits; must equal the split sum")
    s.add_argument("--split", type=_split, default=(8, 3, 5), help="f,a,s bit split")
    s.add_argument("--occupancy", type=float, default=0.95)
    s.add_argument("--constructions", type=int, default=10)
    s.add_argument("--churn", type=int, default=0, help="replacement steps per construction")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--audit", type=int, default=10_000, help="lookups audited per construction")
    s.add_argument("--trace", type=Path, help="insert keys from a trace file instead of random keys")
    s.add_argument("--out", type=Path, help="report path (default: stdout)")
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    g = sub.add_parser("gen-trace", help="synthetic 5-tuple keys, one hex key per line")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--ipv6", action="store_true")
    g.add_argument("--out", type=Path, help="output file (default: stdout)")
    return p


def _write(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_analyze(args) -> int:
    budgets = args.bits or [12, 14, 16]
    for b in budgets:
        if b < 8:
            raise UsageError(f"--bits: budget {b} below the minimum of 8")
    if not 0 <= args.occupancy <= 1:
        raise UsageError("--occupancy must be in [0, 1]")
    if args.cells < 1 or args.buckets < 1:
        raise UsageError("--cells and --buckets must be positive")
    cons = SplitConstraints(min_f=args.min_f, max_f=args.max_f, min_s=args.min_s)
    tables = {}
    for b in budgets:
        rows = sweep(b, o=args.occupancy, c=args.cells, m=2 * args.buckets, constraints=cons)
        if not rows:
            raise UsageError(f"--bits {b}: no split satisfies --min-f/--max-f/--min-s")
        tables[b] = rows
    if args.out is None:
        sys.stdout.write(sweep_csv(r for rows in tables.values() for r in rows))
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        for b, rows in tables.items():
            (args.out / f"sweep_{b}.csv").write_text(sweep_csv(rows))
    return EXIT_OK


def read_trace(path: Path) -> np.ndarray:
    keys = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            keys.append(bytes.fromhex(line))
        except ValueError:
            raise UsageError(f"--trace: line {n} is not hex") from None
    if not keys:
        raise UsageError("--trace: file holds no keys")
    if len({len(k) for k in keys}) != 1:
        raise UsageError("--trace: keys have mixed lengths")
    return np.frombuffer(b"".join(keys), np.uint8).reshape(len(keys), len(keys[0]))


def _physical_memory() -> Optional[int]:
    try:
        return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        return None


def cmd_simulate(args) -> int:
    f, a, s = args.split
    if args.bits is not None and args.bits != f + a + s:
        raise UsageError(f"--split {f},{a},{s} sums to {f + a + s}, not --bits {args.bits}")
    b = args.buckets
    if b < 1 or b & (b - 1):
        raise UsageError("--buckets must be a power of two")
    if args.cells < 1:
        raise UsageError("--cells must be positive")
    if not 0 <= args.occupancy <= MAX_OCCUPANCY:
        raise UsageError(f"--occupancy must be in [0, {MAX_OCCUPANCY}]")
    if args.constructions < 1:
        raise UsageError("--constructions must be positive")
    if args.churn < 0:
        raise UsageError("--churn must be non-negative")
    if args.workers < 1:
        raise UsageError("--workers must be positive")

    trace = read_trace(args.trace) if args.trace else None
    key_len = trace.shape[1] if trace is not None else 13
    need = CuCoTrack.estimated_bytes(b, args.cells, key_len) * min(args.workers, args.constructions)
    mem = _physical_memory()
    if mem is not None and need > mem // 2:
        raise UsageError(f"--buckets {b}: tables need ~{need >> 20} MiB, more than half of physical memory")

    try:
        cfg = ExperimentConfig(
            f_bits=f, a_bits=a, s_bits=s,
            buckets_per_table=b, cells_per_bucket=args.cells, occupancy=args.occupancy,
            num_constructions=args.constructions, churn_steps=args.churn, seed=args.seed,
            key_len=key_len, audit_lookups=args.audit,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    report = measure_vs_model(cfg, workers=args.workers, trace=trace)
    _write(report.to_csv() if args.format == "csv" else report.to_jsonl(), args.out)
    sys.stderr.write(report.summary())
    return EXIT_TABLE_FULL if report.construction_failures else EXIT_OK


def gen_trace_lines(count: int, seed: int, ipv6: bool) -> list[str]:
    rng = np.random.default_rng(seed)
    width = 16 if ipv6 else 4
    seen: set[bytes] = set()
    lines = []
    while len(lines) < count:
        raw = rng.bytes(2 * width)
        sport, dport = (int(v) for v in rng.integers(0, 1 << 16, size=2))
        proto = 6 if rng.random() < 0.8 else 17
        key = encode_five_tuple(FiveTuple(raw[:width], raw[width:], sport, dport, proto))
        if key in seen:
            continue
        seen.add(key)
        lines.append(key.hex())
    return lines


def cmd_gen_trace(args) -> int:
    if args.count <= 0:
        raise UsageError("--count must be positive")
    _write("".join(ln + "\n" for ln in gen_trace_lines(args.count, args.seed, args.ipv6)), args.out)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "gen-trace": cmd_gen_trace}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        sys.stderr.write(f"cucotrack {args.command}: error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
