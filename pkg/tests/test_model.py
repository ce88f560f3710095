import itertools
import math

import pytest
from hypothesis import given, strategies as st

from cucotrack.model import (
    SWEEP_HEADER,
    ModelParams,
    SplitConstraints,
    dynamic_failure,
    evaluate,
    expected_unresolvable,
    lam,
    p_fail,
    p_group,
    sweep,
    sweep_csv,
)

REF = ModelParams(7, 4, 3, o=0.95, c=4, m=1 << 20)

# independent 50-digit mpmath evaluation of the closed forms
GOLDEN_N = 0.00046747933160777424236786085319712600044322249784443
GOLDEN_F = 3.8337197540333926156186000907934368632060067034339e-10


def test_lambda_examples():
    assert lam(ModelParams(7, 4, 3, o=0.0)) == 0
    assert lam(REF) == pytest.approx(7.6 / 128, rel=1e-15)
    assert lam(REF) == pytest.approx(0.059375, rel=1e-15)
    assert lam(ModelParams(8, 4, 3)) == pytest.approx(lam(REF) / 2, rel=1e-15)


def test_p_group_examples():
    assert p_group(0, 0.0) == 1
    assert p_group(1, 0.059375) == pytest.approx(0.055952228398420517, rel=1e-12)


@pytest.mark.parametrize("lam_", [0.0, 1e-6, 0.059375, 0.11875, 0.5, 3.0])
def test_poisson_normalization(lam_):
    assert abs(sum(p_group(i, lam_) for i in range(51)) - 1) < 1e-12


def test_p_group_rejects_negative():
    with pytest.raises(ValueError):
        p_group(-1, 0.1)


def test_p_fail_examples():
    assert p_fail(2, 1, 0) == 0.5
    assert p_fail(2, 4, 3) == pytest.approx(2**-32, rel=1e-12)
    assert p_fail(2, 4, 3) == pytest.approx(2.33e-10, rel=1e-2)
    with pytest.raises(ValueError):
        p_fail(1, 1, 1)


@pytest.mark.parametrize("a,s", [(1, 0), (2, 1), (3, 5), (4, 3)])
def test_p_fail_pair_is_used_verbatim(a, s):
    assert p_fail(2, a, s) == pytest.approx(2.0 ** (-a * 2**s), rel=1e-12)


def exact_group_failure(i, a, s):
    """Enumerate every hash outcome of i members x 2**s selectors x 2**a values."""
    nsel, nval = 2**s, 2**a
    fail = 0
    total = 0
    for outcome in itertools.product(range(nval), repeat=i * nsel):
        v = [outcome[j * nsel : (j + 1) * nsel] for j in range(i)]
        total += 1
        stuck = any(
            all(any(v[o][k] == v[j][k] for o in range(i) if o != j) for k in range(nsel)) for j in range(i)
        )
        fail += stuck
    return fail / total


def test_p_fail_against_enumeration():
    exact = exact_group_failure(3, 2, 1)  # 4**6 outcomes
    estimate = p_fail(3, 2, 1)
    per_member = estimate / 3
    print(f"i=3 a=2 s=1: exact {exact:.6f}, union-bound estimate {estimate:.6f}")
    # union bound over members brackets the truth from above; one member from below
    assert per_member <= exact <= estimate
    # union-bound slack stays under a factor 3 at this size
    assert estimate / exact < 3


def test_pair_failure_against_enumeration():
    # i == 2 is exact: both members fail together
    assert exact_group_failure(2, 1, 1) == pytest.approx(p_fail(2, 1, 1), rel=1e-12)
    assert exact_group_failure(2, 2, 1) == pytest.approx(p_fail(2, 2, 1), rel=1e-12)


def test_expected_unresolvable_golden():
    assert expected_unresolvable(REF) == pytest.approx(GOLDEN_N, rel=1e-12)
    assert float(expected_unresolvable(REF, precise=True)) == pytest.approx(GOLDEN_N, rel=1e-14)
    assert expected_unresolvable(ModelParams(7, 4, 3, o=0)) == 0


def test_dynamic_failure_reference_point():
    F = dynamic_failure(REF)
    assert F == pytest.approx(GOLDEN_F, rel=1e-12)
    assert F == pytest.approx(3.8e-10, rel=0.10)
    assert dynamic_failure(ModelParams(7, 4, 3, o=0)) == 0
    tail = [dynamic_failure(ModelParams(7, 4, 3, o=10.0**-k)) for k in range(1, 10)]
    assert all(x > y for x, y in zip(tail, tail[1:])) and tail[-1] < 1e-19


def test_prefactor_forms_agree():
    p = REF
    total = sum(p_group(i, lam(p)) * p_fail(i, p.a_bits, p.s_bits) for i in range(2, 9))
    assert expected_unresolvable(p) == pytest.approx(p.m * 2 ** (p.f_bits - 1) * total, rel=1e-15)


def test_underflow_goes_to_zero():
    # a * 2**s = 4096
    assert p_fail(2, 16, 8) == 0.0
    assert p_fail(5, 16, 8) == 0.0
    F = dynamic_failure(ModelParams(6, 16, 8))
    assert F == 0.0 and not math.isnan(F)


def test_evaluate_report():
    r = evaluate(REF)
    assert r.F == dynamic_failure(REF) and r.N == expected_unresolvable(REF)
    assert len(r.p_group) == 9
    assert set(r.p_fail) == set(range(2, 9))
    assert all(0 <= v <= 1 for v in [*r.p_group, *r.p_fail.values()])


@given(
    f=st.integers(1, 24),
    a=st.integers(1, 16),
    s=st.integers(0, 8),
    o=st.floats(0, 1),
    c=st.integers(1, 8),
)
def test_outputs_in_range(f, a, s, o, c):
    p = ModelParams(f, a, s, o=o, c=c)
    r = evaluate(p)
    assert 0 <= r.F <= 1
    assert r.N >= 0
    assert all(0 <= v <= 1 for v in r.p_fail.values())


@pytest.mark.parametrize(
    "kw", [dict(o=1.5), dict(o=-0.1), dict(c=0), dict(m=3), dict(m=0)]
)
def test_params_validated(kw):
    with pytest.raises(ValueError):
        ModelParams(7, 4, 3, **kw)


@given(f=st.integers(6, 14), a=st.integers(1, 8), s=st.integers(0, 6))
def test_monotone_in_bits(f, a, s):
    base = ModelParams(f, a, s)
    for bumped in (ModelParams(f + 1, a, s), ModelParams(f, a + 1, s), ModelParams(f, a, s + 1)):
        assert dynamic_failure(bumped) <= dynamic_failure(base)
        assert expected_unresolvable(bumped) <= expected_unresolvable(base)


@given(f=st.integers(6, 14), a=st.integers(1, 8), s=st.integers(0, 6), o=st.floats(0.05, 0.9))
def test_monotone_in_occupancy(f, a, s, o):
    lo, hi = ModelParams(f, a, s, o=o), ModelParams(f, a, s, o=o + 0.05)
    assert dynamic_failure(lo) <= dynamic_failure(hi)
    assert expected_unresolvable(lo) <= expected_unresolvable(hi)


def test_F_decreases_with_selector_bits():
    Fs = [dynamic_failure(ModelParams(7, 3, s)) for s in range(0, 6)]
    assert all(x > y for x, y in zip(Fs, Fs[1:]))


# -- sweep ---------------------------------------------------------------------


def test_sweep_twelve_bits_f6():
    rows = sweep(12, constraints=SplitConstraints(min_f=6, max_f=6, max_a=5))
    assert [(r.f_bits, r.a_bits, r.s_bits) for r in rows] == [(6, a, 6 - a) for a in range(1, 6)]


def test_sweep_enumerates_all_splits():
    rows = sweep(12)
    splits = {(r.f_bits, r.a_bits, r.s_bits) for r in rows}
    expected = {(f, a, 12 - f - a) for f in range(6, 12) for a in range(1, 12 - f + 1)}
    assert splits == expected
    assert all(r.f_bits >= 6 and r.a_bits >= 1 and r.s_bits >= 0 for r in rows)


@pytest.mark.parametrize("budget", [12, 14, 16])
def test_best_split_leans_to_smaller_a(budget):
    best = min(sweep(budget), key=lambda r: r.F)
    assert best.a_bits <= best.s_bits


def test_sweep_empty_occupancy():
    for b in (12, 16):
        assert all(r.N == 0 and r.F == 0 for r in sweep(b, o=0.0))


def test_sweep_csv_format():
    text = sweep_csv(sweep(16))
    lines = text.splitlines()
    assert lines[0] == SWEEP_HEADER == "f_bits,a_bits,s_bits,occupancy,cells,m,lambda,N,F"
    row = next(ln for ln in lines[1:] if ln.startswith("8,3,5,"))
    fields = row.split(",")
    assert fields[:6] == ["8", "3", "5", "0.95", "4", "1048576"]
    assert float(fields[8]) < 1e-12
    # six significant digits in scientific notation
    mantissa = fields[8].split("e")[0]
    assert len(mantissa.replace(".", "")) == 6
