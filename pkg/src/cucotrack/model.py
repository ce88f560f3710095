"""Closed-form failure model: Poisson group sizes, adaptation failure, N and F.

Elements are grouped by (bucket pair, fixed fingerprint). Group sizes are
approximately Poisson with rate ``2 * o * c / 2**f``. A group of ``i`` members
fails to adapt when some member finds, under every one of its ``2**s``
selectors, another member with the same ``a``-bit value.

Double-precision evaluation works in log space so that terms like
``2**-(a * 2**s)`` go to zero instead of underflowing through subtraction.
``precise=True`` switches to mpmath for golden values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import mpmath

MAX_GROUP = 8  # 2 tables x 4 cells; bigger groups cannot be placed


@dataclass(frozen=True)
class ModelParams:
    f_bits: int
    a_bits: int
    s_bits: int
    o: float = 0.95
    c: int = 4
    m: int = 1 << 20  # total buckets over both tables

    def __post_init__(self):
        if not 0 <= self.o <= 1:
            raise ValueError("occupancy must be in [0, 1]")
        if self.c < 1:
            raise ValueError("cells per bucket must be >= 1")
        if self.m <= 0 or self.m % 2:
            raise ValueError("m must be even and positive")
        if self.f_bits < 1 or self.a_bits < 1 or self.s_bits < 0:
            raise ValueError("need f_bits >= 1, a_bits >= 1, s_bits >= 0")


@dataclass
class ModelReport:
    params: ModelParams
    lam: float
    p_group: list[float]
    p_fail: dict[int, float]
    N: float
    F: float


def lam(p: ModelParams, precise: bool = False):
    """Poisson rate of elements per (bucket pair, fixed fingerprint)."""
    if precise:
        return mpmath.mpf(2) * mpmath.mpf(p.o) * p.c / mpmath.mpf(2) ** p.f_bits
    return 2.0 * p.o * p.c / 2.0**p.f_bits


def p_group(i: int, lam_, precise: bool = False):
    if i < 0:
        raise ValueError("i must be >= 0")
    if precise:
        lam_ = mpmath.mpf(lam_)
        return lam_**i / mpmath.factorial(i) * mpmath.exp(-lam_)
    if lam_ == 0:
        return 1.0 if i == 0 else 0.0
    return math.exp(i * math.log(lam_) - lam_ - math.lgamma(i + 1))


def _log_member_fail(others: int, a_bits: int, s_bits: int) -> float:
    """log of (1 - (1 - 2**-a)**others) ** 2**s."""
    log_unique = others * math.log1p(-(2.0**-a_bits))
    return (2.0**s_bits) * math.log(-math.expm1(log_unique))


def p_fail(i: int, a_bits: int, s_bits: int, precise: bool = False):
    """Probability a group of ``i`` elements cannot be made collision-free.

    i == 2 uses the exact correlated form 2**-(a * 2**s); i >= 3 uses the
    union bound i * (per-member failure), clamped to 1.
    """
    if i < 2:
        raise ValueError("a collision needs at least two elements")
    if precise:
        two = mpmath.mpf(2)
        if i == 2:
            return two ** (-a_bits * 2**s_bits)
        q = (two**a_bits - 1) / two**a_bits
        return min(mpmath.mpf(1), i * (1 - q ** (i - 1)) ** (2**s_bits))
    if i == 2:
        return math.exp(-a_bits * (2.0**s_bits) * math.log(2.0))
    return min(1.0, math.exp(math.log(i) + _log_member_fail(i - 1, a_bits, s_bits)))


def expected_unresolvable(p: ModelParams, precise: bool = False):
    """Expected number of groups left with an unremovable collision after construction."""
    lam_ = lam(p, precise)
    if lam_ == 0:
        return mpmath.mpf(0) if precise else 0.0
    total = sum(
        p_group(i, lam_, precise) * p_fail(i, p.a_bits, p.s_bits, precise)
        for i in range(2, MAX_GROUP + 1)
    )
    scale = (mpmath.mpf(p.m) / 2 * mpmath.mpf(2) ** p.f_bits) if precise else p.m / 2 * 2.0**p.f_bits
    return scale * total


def dynamic_failure(p: ModelParams, precise: bool = False):
    """Probability that one replacement insertion at occupancy ``o`` cannot be adapted.

    The new element joins a group that already holds ``i`` elements with
    probability P(i); the enlarged group then fails with p_fail(i + 1).
    """
    lam_ = lam(p, precise)
    if lam_ == 0:
        return mpmath.mpf(0) if precise else 0.0
    return sum(
        p_group(i, lam_, precise) * p_fail(i + 1, p.a_bits, p.s_bits, precise)
        for i in range(1, MAX_GROUP)
    )


def evaluate(p: ModelParams) -> ModelReport:
    lam_ = lam(p)
    return ModelReport(
        params=p,
        lam=lam_,
        p_group=[p_group(i, lam_) for i in range(MAX_GROUP + 1)],
        p_fail={i: p_fail(i, p.a_bits, p.s_bits) for i in range(2, MAX_GROUP + 1)},
        N=expected_unresolvable(p),
        F=dynamic_failure(p),
    )


# ---------------------------------------------------------------------------
# bit-budget sweeps


@dataclass(frozen=True)
class SplitConstraints:
    min_f: int = 6
    max_f: Optional[int] = None
    min_a: int = 1
    max_a: Optional[int] = None
    min_s: int = 0
    max_s: Optional[int] = None

    def splits(self, budget: int) -> Iterable[tuple[int, int, int]]:
        for f in range(self.min_f, budget + 1):
            if self.max_f is not None and f > self.max_f:
                break
            for a in range(self.min_a, budget - f + 1):
                if self.max_a is not None and a > self.max_a:
                    break
                s = budget - f - a
                if s < self.min_s or (self.max_s is not None and s > self.max_s):
                    continue
                yield f, a, s


@dataclass
class SweepRow:
    f_bits: int
    a_bits: int
    s_bits: int
    occupancy: float
    cells: int
    m: int
    lam: float
    N: float
    F: float

    def csv(self) -> str:
        return (
            f"{self.f_bits},{self.a_bits},{self.s_bits},{self.occupancy:g},{self.cells},{self.m},"
            f"{self.lam:.5e},{self.N:.5e},{self.F:.5e}"
        )


SWEEP_HEADER = "f_bits,a_bits,s_bits,occupancy,cells,m,lambda,N,F"


def sweep(
    bit_budget: int,
    o: float = 0.95,
    c: int = 4,
    m: int = 1 << 20,
    constraints: Optional[SplitConstraints] = None,
) -> list[SweepRow]:
    """N and F for every split f + a + s == bit_budget allowed by ``constraints``."""
    constraints = constraints or SplitConstraints()
    rows = []
    for f, a, s in constraints.splits(bit_budget):
        p = ModelParams(f, a, s, o=o, c=c, m=m)
        rows.append(SweepRow(f, a, s, o, c, m, lam(p), expected_unresolvable(p), dynamic_failure(p)))
    return rows


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    return "\n".join([SWEEP_HEADER, *(r.csv() for r in rows)]) + "\n"
