"""Monte Carlo experiments: build tables to a target occupancy, churn, compare with the model."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .hashing import IPV4_KEY_LEN, fill_random_key, splitmix64
from .model import ModelParams, dynamic_failure, expected_unresolvable
from .table import CuCoTrack

MAX_OCCUPANCY = 0.97


@dataclass(frozen=True)
class ExperimentConfig:
    f_bits: int = 8
    a_bits: int = 3
    s_bits: int = 5
    buckets_per_table: int = 8192
    cells_per_bucket: int = 4
    occupancy: float = 0.95
    num_constructions: int = 1
    churn_steps: int = 0
    seed: int = 1
    key_len: int = IPV4_KEY_LEN
    value_bits: int = 32
    max_kicks: int = 500
    audit_lookups: int = 10_000

    def __post_init__(self):
        if not 0 <= self.occupancy <= MAX_OCCUPANCY:
            raise ValueError(f"occupancy must be in [0, {MAX_OCCUPANCY}]")
        if self.num_constructions < 1:
            raise ValueError("num_constructions must be positive")
        if self.churn_steps < 0 or self.audit_lookups < 0:
            raise ValueError("churn_steps and audit_lookups must be non-negative")

    @property
    def total_cells(self) -> int:
        return 2 * self.buckets_per_table * self.cells_per_bucket

    @property
    def target_count(self) -> int:
        return math.ceil(self.occupancy * self.total_cells)

    def model_params(self) -> ModelParams:
        return ModelParams(
            self.f_bits,
            self.a_bits,
            self.s_bits,
            o=self.occupancy,
            c=self.cells_per_bucket,
            m=2 * self.buckets_per_table,
        )

    def make_table(self, seed: int) -> CuCoTrack:
        return CuCoTrack(
            buckets_per_table=self.buckets_per_table,
            cells_per_bucket=self.cells_per_bucket,
            f_bits=self.f_bits,
            a_bits=self.a_bits,
            s_bits=self.s_bits,
            value_bits=self.value_bits,
            seed=seed,
            key_len=self.key_len,
            max_kicks=self.max_kicks,
        )


@dataclass
class ConstructionStats:
    index: int
    seed: int
    attempts: int = 0
    build_unresolvable: int = 0
    table_full: bool = False
    churn_steps: int = 0
    churn_attempts: int = 0
    churn_failures: int = 0
    duplicates: int = 0
    audit_lookups: int = 0
    audit_bucket_reads: int = 0
    audit_correct: int = 0
    trace_exhausted: bool = False
    occupancy: float = 0.0
    kicks: int = 0
    adaptations: int = 0
    selector_changes: int = 0

    @classmethod
    def from_kernel(cls, index: int, seed: int, s: np.ndarray, table: CuCoTrack) -> "ConstructionStats":
        return cls(
            index=index,
            seed=seed,
            attempts=int(s[K.S_ATTEMPTS]),
            build_unresolvable=int(s[K.S_BUILD_UNRESOLVABLE]),
            table_full=bool(s[K.S_TABLE_FULL]),
            churn_steps=int(s[K.S_CHURN_STEPS]),
            churn_attempts=int(s[K.S_CHURN_ATTEMPTS]),
            churn_failures=int(s[K.S_CHURN_FAILURES]),
            duplicates=int(s[K.S_DUPLICATES]),
            audit_lookups=int(s[K.S_AUDIT_LOOKUPS]),
            audit_bucket_reads=int(s[K.S_AUDIT_READS]),
            audit_correct=int(s[K.S_AUDIT_CORRECT]),
            trace_exhausted=bool(s[K.S_TRACE_EXHAUSTED]),
            occupancy=table.occupancy(),
            kicks=table.kicks,
            adaptations=table.adaptations,
            selector_changes=table.selector_changes,
        )


_NO_TRACE = np.zeros((0, 1), np.uint8)


def _key_rng(seed: int) -> np.ndarray:
    return np.array([splitmix64(seed ^ 0xC0FFEE, 1)[0]], dtype=np.uint64)


def _run(table: CuCoTrack, target: int, churn_steps: int, key_rng: np.ndarray, trace, audit: int) -> np.ndarray:
    stats = np.zeros(K.NSTATS, np.int64)
    trace = _NO_TRACE if trace is None else trace
    if trace.shape[0] and trace.shape[1] != table.key_len:
        raise ValueError("trace key length does not match the table")
    if trace.shape[0] == 0 and trace.shape[1] != table.key_len:
        trace = np.zeros((0, table.key_len), np.uint8)
    K.run_construction(table.state, target, churn_steps, key_rng, trace, audit, stats)
    return stats


def build_to_occupancy(cfg: ExperimentConfig, seed: Optional[int] = None, trace=None):
    """Insert fresh random keys until occupancy reaches ``cfg.occupancy``.

    Keys rejected as unresolvable collisions are counted and replaced; a
    TABLE_FULL outcome stops the build. Returns ``(table, stats, key_rng)``;
    pass ``key_rng`` on to :func:`churn` to continue the same key stream.
    """
    seed = cfg.seed if seed is None else seed
    table = cfg.make_table(seed)
    key_rng = _key_rng(seed)
    s = _run(table, cfg.target_count, 0, key_rng, trace, 0)
    return table, ConstructionStats.from_kernel(0, seed, s, table), key_rng


def churn(table: CuCoTrack, steps: int, key_rng=None, trace=None) -> ConstructionStats:
    """Remove a random stored element and insert a fresh key, ``steps`` times.

    Failed inserts are discarded and retried with new keys so occupancy is
    preserved; the empirical F is ``churn_failures / churn_attempts``.
    """
    if key_rng is None:
        key_rng = _key_rng(table.seed + 1)
    s = _run(table, len(table), steps, key_rng, trace, 0)
    return ConstructionStats.from_kernel(0, table.seed, s, table)


def random_key_stream(seed: int, length: int = IPV4_KEY_LEN) -> Iterator[bytes]:
    """Endless deterministic stream of distinct random keys."""
    rng = _key_rng(seed)
    buf = np.empty(length, np.uint8)
    seen: set[bytes] = set()
    while True:
        fill_random_key(rng, buf)
        k = buf.tobytes()
        if k in seen:
            continue
        seen.add(k)
        yield k


def run_one(cfg: ExperimentConfig, index: int, seed: int, trace=None) -> ConstructionStats:
    table = cfg.make_table(seed)
    s = _run(table, cfg.target_count, cfg.churn_steps, _key_rng(seed), trace, cfg.audit_lookups)
    return ConstructionStats.from_kernel(index, seed, s, table)


def _run_batch(args) -> list[ConstructionStats]:
    cfg, jobs = args
    return [run_one(cfg, i, s) for i, s in jobs]


def construction_seeds(cfg: ExperimentConfig) -> list[int]:
    return splitmix64(cfg.seed, cfg.num_constructions)


# ---------------------------------------------------------------------------
# reports


def _rel_dev(emp: float, model: float) -> Optional[float]:
    if emp > 0 and model > 0:
        return abs(emp - model) / model
    return None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    constructions: int
    construction_failures: int
    build_inserts: int
    build_unresolvable: int
    empirical_N: float
    model_N: float
    churn_attempts: int
    churn_failures: int
    empirical_F: float
    F_ci95: tuple[float, float]
    model_F: float
    deviation_N: Optional[float]
    deviation_F: Optional[float]
    mean_lookup_accesses: float
    audit_lookups: int
    audit_correct: int
    mean_adaptations: float
    mean_selector_changes: float
    mean_kicks_per_insert: float
    records: list[ConstructionStats] = field(default_factory=list, repr=False)

    CSV_HEADER = (
        "f_bits,a_bits,s_bits,buckets_per_table,cells_per_bucket,occupancy,constructions,"
        "construction_failures,build_inserts,build_unresolvable,empirical_N,model_N,deviation_N,"
        "churn_attempts,churn_failures,empirical_F,F_ci_low,F_ci_high,model_F,deviation_F,"
        "mean_lookup_accesses,audit_lookups,audit_correct,mean_adaptations,mean_selector_changes,"
        "mean_kicks_per_insert,seed"
    )

    def csv_row(self) -> str:
        c = self.config

        def g(x):
            return "" if x is None else f"{x:.5e}"

        return ",".join(
            str(v)
            for v in (
                c.f_bits, c.a_bits, c.s_bits, c.buckets_per_table, c.cells_per_bucket,
                f"{c.occupancy:g}", self.constructions, self.construction_failures,
                self.build_inserts, self.build_unresolvable, g(self.empirical_N), g(self.model_N),
                g(self.deviation_N), self.churn_attempts, self.churn_failures, g(self.empirical_F),
                g(self.F_ci95[0]), g(self.F_ci95[1]), g(self.model_F), g(self.deviation_F),
                f"{self.mean_lookup_accesses:.4f}", self.audit_lookups, self.audit_correct,
                f"{self.mean_adaptations:.4f}", f"{self.mean_selector_changes:.4f}",
                f"{self.mean_kicks_per_insert:.4f}", c.seed,
            )
        )

    def to_csv(self) -> str:
        return self.CSV_HEADER + "\n" + self.csv_row() + "\n"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    def summary(self) -> str:
        c = self.config
        dev = lambda d: "n/a" if d is None else f"{100 * d:.1f}%"  # noqa: E731
        lines = [
            f"split f={c.f_bits} a={c.a_bits} s={c.s_bits}; {c.buckets_per_table} buckets/table x "
            f"{c.cells_per_bucket} cells; occupancy {c.occupancy:g}",
            f"constructions: {self.constructions}  (table full: {self.construction_failures})",
            f"build: {self.build_inserts} inserts, {self.build_unresolvable} unresolvable; "
            f"N per construction {self.empirical_N:.4g} vs model {self.model_N:.4g} ({dev(self.deviation_N)})",
            f"churn: {self.churn_attempts} inserts, {self.churn_failures} unresolvable; "
            f"F {self.empirical_F:.4g} [{self.F_ci95[0]:.3g}, {self.F_ci95[1]:.3g}] "
            f"vs model {self.model_F:.4g} ({dev(self.deviation_F)})",
            f"lookups audited: {self.audit_lookups}, correct {self.audit_correct}, "
            f"mean bucket accesses {self.mean_lookup_accesses:.3f}",
        ]
        return "\n".join(lines) + "\n"


def aggregate(cfg: ExperimentConfig, records: list[ConstructionStats]) -> ExperimentReport:
    records = sorted(records, key=lambda r: r.index)
    n = len(records)
    mp = cfg.model_params()
    build_unres = sum(r.build_unresolvable for r in records)
    attempts = sum(r.churn_attempts for r in records)
    failures = sum(r.churn_failures for r in records)
    emp_F = failures / attempts if attempts else 0.0
    half = 1.96 * math.sqrt(emp_F * (1 - emp_F) / attempts) if attempts else 0.0
    audits = sum(r.audit_lookups for r in records)
    inserts = sum(r.attempts for r in records) + attempts
    model_N = expected_unresolvable(mp)
    model_F = dynamic_failure(mp)
    emp_N = build_unres / n
    return ExperimentReport(
        config=cfg,
        constructions=n,
        construction_failures=sum(r.table_full for r in records),
        build_inserts=sum(r.attempts for r in records),
        build_unresolvable=build_unres,
        empirical_N=emp_N,
        model_N=model_N,
        churn_attempts=attempts,
        churn_failures=failures,
        empirical_F=emp_F,
        F_ci95=(max(0.0, emp_F - half), emp_F + half),
        model_F=model_F,
        deviation_N=_rel_dev(emp_N, model_N),
        deviation_F=_rel_dev(emp_F, model_F),
        mean_lookup_accesses=sum(r.audit_bucket_reads for r in records) / audits if audits else 0.0,
        audit_lookups=audits,
        audit_correct=sum(r.audit_correct for r in records),
        mean_adaptations=sum(r.adaptations for r in records) / n,
        mean_selector_changes=sum(r.selector_changes for r in records) / n,
        mean_kicks_per_insert=sum(r.kicks for r in records) / inserts if inserts else 0.0,
        records=records,
    )


def measure_vs_model(
    cfg: ExperimentConfig, workers: int = 1, trace=None, progress=None
) -> ExperimentReport:
    """Run ``cfg.num_constructions`` independent build + churn experiments.

    Construction ``i`` uses the i-th SplitMix64 draw from ``cfg.seed`` for its
    hash seeds and key stream, so results do not depend on ``workers``.
    A trace, when given, feeds every construction the same key sequence.
    """
    seeds = construction_seeds(cfg)
    jobs = list(enumerate(seeds))
    if trace is not None or workers <= 1:
        records = []
        for i, s in jobs:
            records.append(run_one(cfg, i, s, trace))
            if progress:
                progress(i + 1, len(jobs))
    else:
        chunks = [(cfg, jobs[w::workers]) for w in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            records = [r for batch in ex.map(_run_batch, chunks) for r in batch]
    return aggregate(cfg, records)
