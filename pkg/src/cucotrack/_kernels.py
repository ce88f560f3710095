"""Compiled table operations shared by :class:`cucotrack.table.CuCoTrack` and the harness.

Table state is a :class:`TableState` namedtuple of flat arrays. Cell ``(t, b, i)``
lives at flat index ``(t * B + b) * c + i``.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit, uint64

from .hashing import (
    fill_random_key,
    k_locate,
    k_offset,
    k_selector_hash,
    rand_below,
    splitmix_next,
)

TableState = namedtuple(
    "TableState",
    [
        "occ",  # uint8[n]   compressed-cell occupied flag
        "fp",  # uint32[n]  fixed fingerprint
        "sel",  # uint8[n]   selector
        "adp",  # uint32[n]  adaptive value
        "val",  # uint64[n]  associated value
        "present",  # uint8[n]   backing-store slot present
        "keys",  # uint8[n, key_len] backing-store full keys
        "seeds",  # uint64[3 + 2**s]
        "params",  # int64[NPARAMS]
        "counters",  # int64[NCOUNTERS]
        "rng",  # uint64[1]
        "path",  # int64[max_kicks] kick log for undo
        "scratch",  # uint8[key_len] carried key during displacement
    ],
)

# params
P_BUCKETS, P_CELLS, P_FMASK, P_AMASK, P_NSEL, P_VMASK, P_MAX_KICKS = range(7)
NPARAMS = 7

# counters
(
    C_STORED,
    C_BUCKET_READS,
    C_BACKING_READS,
    C_KICKS,
    C_ADAPTATIONS,
    C_SELECTOR_CHANGES,
    C_LOOKUPS,
    C_LOOKUP_READS,
) = range(8)
NCOUNTERS = 8

# insert outcomes
INSERTED, UPDATED, UNRESOLVABLE, TABLE_FULL = 0, 1, 2, 3


@njit(cache=True, inline="always")
def _keys_equal(a, b):
    for i in range(a.shape[0]):
        if a[i] != b[i]:
            return False
    return True


@njit(cache=True, inline="always")
def _cell(t, b, i, B, c):
    return (t * B + b) * c + i


@njit(cache=True)
def assign_selectors(hv, current):
    """Pick a selector per group member so its adaptive value is unique in the group.

    ``hv[j, k]`` is member j's hash under selector k; ``current[j]`` its
    selector or -1 for a new member. A member keeps its current selector when
    still valid, otherwise takes the lowest valid one. Returns the assignment
    as ``(True, assignment)``, or ``(False, partial)`` if some member has no
    valid selector.

    Validity is per member: a query for e' inspects e's cell by evaluating
    selector k_e on e', so only hv[e', k_e] != hv[e, k_e] matters.
    """
    n, nsel = hv.shape
    out = np.empty(n, np.int64)
    for j in range(n):
        chosen = -1
        cur = current[j]
        if cur >= 0:
            ok = True
            for o in range(n):
                if o != j and hv[o, cur] == hv[j, cur]:
                    ok = False
                    break
            if ok:
                chosen = cur
        if chosen < 0:
            for k in range(nsel):
                ok = True
                for o in range(n):
                    if o != j and hv[o, k] == hv[j, k]:
                        ok = False
                        break
                if ok:
                    chosen = k
                    break
        if chosen < 0:
            return False, out
        out[j] = chosen
    return True, out


@njit(cache=True)
def find_exact(st, key, p1, p2, f):
    """Flat index of the cell holding ``key`` (confirmed via the backing store), or -1."""
    B = st.params[P_BUCKETS]
    c = st.params[P_CELLS]
    for t in range(2):
        b = p1 if t == 0 else p2
        for i in range(c):
            cell = _cell(t, b, i, B, c)
            if st.occ[cell] and st.fp[cell] == f:
                st.counters[C_BACKING_READS] += 1
                if _keys_equal(st.keys[cell], key):
                    return cell
    return -1


@njit(cache=True)
def lookup(st, key):
    B = st.params[P_BUCKETS]
    c = st.params[P_CELLS]
    p1, p2, f = k_locate(key, st.seeds, st.params[P_FMASK], B - 1)
    st.counters[C_BUCKET_READS] += 2
    st.counters[C_LOOKUP_READS] += 2
    st.counters[C_LOOKUPS] += 1
    amask = st.params[P_AMASK]
    for t in range(2):
        b = p1 if t == 0 else p2
        for i in range(c):
            cell = _cell(t, b, i, B, c)
            if st.occ[cell] and st.fp[cell] == f:
                if k_selector_hash(key, np.int64(st.sel[cell]), st.seeds, amask) == st.adp[cell]:
                    return True, st.val[cell]
    return False, uint64(0)


@njit(cache=True)
def clear_cell(st, cell):
    st.occ[cell] = 0
    st.present[cell] = 0
    st.fp[cell] = 0
    st.sel[cell] = 0
    st.adp[cell] = 0
    st.val[cell] = 0
    st.keys[cell, :] = 0
    st.counters[C_STORED] -= 1


@njit(cache=True)
def remove(st, key):
    B = st.params[P_BUCKETS]
    p1, p2, f = k_locate(key, st.seeds, st.params[P_FMASK], B - 1)
    st.counters[C_BUCKET_READS] += 2
    cell = find_exact(st, key, p1, p2, f)
    if cell < 0:
        return False
    clear_cell(st, cell)
    return True


@njit(cache=True, inline="always")
def _free_cell(st, t, b):
    B = st.params[P_BUCKETS]
    c = st.params[P_CELLS]
    for i in range(c):
        cell = _cell(t, b, i, B, c)
        if not st.occ[cell]:
            return cell
    return -1


@njit(cache=True, inline="always")
def _write(st, cell, f, s, a, v, key):
    st.occ[cell] = 1
    st.present[cell] = 1
    st.fp[cell] = f
    st.sel[cell] = s
    st.adp[cell] = a
    st.val[cell] = v
    st.keys[cell, :] = key


@njit(cache=True)
def _displace(st, p1, p2, f, s, a, v, key):
    """Cuckoo kicks: carry the new entry into a full bucket, evict a random victim
    to its partner bucket, repeat. On exhaustion every swap is undone."""
    B = st.params[P_BUCKETS]
    c = st.params[P_CELLS]
    max_kicks = st.params[P_MAX_KICKS]
    bmask = B - 1
    carry = st.scratch
    carry[:] = key
    cf = uint64(f)
    cs = uint64(s)
    ca = uint64(a)
    cv = uint64(v)
    t = rand_below(st.rng, 2)
    b = p1 if t == 0 else p2
    for step in range(max_kicks):
        cell = _cell(t, b, rand_below(st.rng, c), B, c)
        st.path[step] = cell
        st.counters[C_KICKS] += 1
        # swap carried entry with victim
        tf, ts, ta, tv = uint64(st.fp[cell]), uint64(st.sel[cell]), uint64(st.adp[cell]), st.val[cell]
        st.fp[cell] = cf
        st.sel[cell] = cs
        st.adp[cell] = ca
        st.val[cell] = cv
        cf, cs, ca, cv = tf, ts, ta, tv
        for j in range(carry.shape[0]):
            tmp = st.keys[cell, j]
            st.keys[cell, j] = carry[j]
            carry[j] = tmp
        # victim moves to its partner bucket in the other table
        b = b ^ k_offset(cf, st.seeds, bmask)
        t = 1 - t
        st.counters[C_BUCKET_READS] += 1
        free = _free_cell(st, t, b)
        if free >= 0:
            _write(st, free, cf, cs, ca, cv, carry)
            st.counters[C_STORED] += 1
            return True
    for step in range(max_kicks - 1, -1, -1):
        cell = st.path[step]
        tf, ts, ta, tv = uint64(st.fp[cell]), uint64(st.sel[cell]), uint64(st.adp[cell]), st.val[cell]
        st.fp[cell] = cf
        st.sel[cell] = cs
        st.adp[cell] = ca
        st.val[cell] = cv
        cf, cs, ca, cv = tf, ts, ta, tv
        for j in range(carry.shape[0]):
            tmp = st.keys[cell, j]
            st.keys[cell, j] = carry[j]
            carry[j] = tmp
    return False


@njit(cache=True)
def selector_matrix(st, members, n, key):
    """hv[j, k] for the n stored members (flat cell indices) plus ``key`` last."""
    nsel = st.params[P_NSEL]
    amask = st.params[P_AMASK]
    hv = np.empty((n + 1, nsel), np.int64)
    for j in range(n):
        for k in range(nsel):
            hv[j, k] = k_selector_hash(st.keys[members[j]], k, st.seeds, amask)
    for k in range(nsel):
        hv[n, k] = k_selector_hash(key, k, st.seeds, amask)
    return hv


@njit(cache=True)
def collect_group(st, p1, p2, f, members):
    """Fill ``members`` with occupied cells of fingerprint f in buckets p1/p2; return count."""
    B = st.params[P_BUCKETS]
    c = st.params[P_CELLS]
    n = 0
    for t in range(2):
        b = p1 if t == 0 else p2
        for i in range(c):
            cell = _cell(t, b, i, B, c)
            if st.occ[cell] and st.fp[cell] == f:
                members[n] = cell
                n += 1
    return n


@njit(cache=True)
def insert(st, key, value):
    B = st.params[P_BUCKETS]
    c = st.params[P_CELLS]
    p1, p2, f = k_locate(key, st.seeds, st.params[P_FMASK], B - 1)
    st.counters[C_BUCKET_READS] += 2
    v = uint64(value) & uint64(st.params[P_VMASK])

    members = np.empty(2 * c, np.int64)
    n = collect_group(st, p1, p2, f, members)
    for j in range(n):
        cell = members[j]
        st.counters[C_BACKING_READS] += 1
        if _keys_equal(st.keys[cell], key):
            st.val[cell] = v
            return UPDATED

    new_sel = np.int64(0)
    if n == 0:
        new_adp = k_selector_hash(key, 0, st.seeds, st.params[P_AMASK])
        old_sel = np.empty(0, np.int64)
    else:
        hv = selector_matrix(st, members, n, key)
        current = np.empty(n + 1, np.int64)
        for j in range(n):
            current[j] = st.sel[members[j]]
        current[n] = -1
        ok, assign = assign_selectors(hv, current)
        if not ok:
            return UNRESOLVABLE
        st.counters[C_ADAPTATIONS] += 1
        old_sel = current[:n].copy()
        for j in range(n):
            if assign[j] != current[j]:
                st.sel[members[j]] = assign[j]
                st.adp[members[j]] = hv[j, assign[j]]
                st.counters[C_SELECTOR_CHANGES] += 1
        new_sel = assign[n]
        new_adp = uint64(hv[n, new_sel])

    free = _free_cell(st, 0, p1)
    if free < 0:
        free = _free_cell(st, 1, p2)
    if free >= 0:
        _write(st, free, f, new_sel, new_adp, v, key)
        st.counters[C_STORED] += 1
        return INSERTED
    if _displace(st, p1, p2, f, new_sel, new_adp, v, key):
        return INSERTED
    # kicks undone, so group members are back in their original cells
    amask = st.params[P_AMASK]
    for j in range(n):
        cell = members[j]
        if st.sel[cell] != old_sel[j]:
            st.sel[cell] = old_sel[j]
            st.adp[cell] = k_selector_hash(st.keys[cell], old_sel[j], st.seeds, amask)
            st.counters[C_SELECTOR_CHANGES] -= 1
    return TABLE_FULL


# ---------------------------------------------------------------------------
# experiment driver

(
    S_ATTEMPTS,
    S_BUILD_UNRESOLVABLE,
    S_TABLE_FULL,
    S_CHURN_STEPS,
    S_CHURN_ATTEMPTS,
    S_CHURN_FAILURES,
    S_DUPLICATES,
    S_AUDIT_LOOKUPS,
    S_AUDIT_READS,
    S_AUDIT_CORRECT,
    S_TRACE_EXHAUSTED,
) = range(11)
NSTATS = 11


@njit(cache=True)
def _next_key(key, key_rng, trace, pos):
    if trace.shape[0] > 0:
        if pos[0] >= trace.shape[0]:
            return False
        key[:] = trace[pos[0]]
        pos[0] += 1
        return True
    fill_random_key(key_rng, key)
    return True


@njit(cache=True)
def random_occupied_cell(st):
    n = st.occ.shape[0]
    while True:
        cell = rand_below(st.rng, n)
        if st.occ[cell]:
            return cell


@njit(cache=True)
def run_construction(st, target, churn_steps, key_rng, trace, audit_n, stats):
    """Build to ``target`` stored entries, then churn (remove one, insert one).

    Keys rejected as unresolvable are discarded and replaced by fresh keys.
    A TABLE_FULL outcome stops the construction.
    """
    klen = st.keys.shape[1]
    key = np.empty(klen, np.uint8)
    pos = np.zeros(1, np.int64)
    vmask = uint64(st.params[P_VMASK])

    while st.counters[C_STORED] < target:
        if not _next_key(key, key_rng, trace, pos):
            stats[S_TRACE_EXHAUSTED] = 1
            break
        stats[S_ATTEMPTS] += 1
        out = insert(st, key, splitmix_next(st.rng) & vmask)
        if out == UNRESOLVABLE:
            stats[S_BUILD_UNRESOLVABLE] += 1
        elif out == UPDATED:
            stats[S_DUPLICATES] += 1
        elif out == TABLE_FULL:
            stats[S_TABLE_FULL] = 1
            break

    if stats[S_TABLE_FULL] == 0 and stats[S_TRACE_EXHAUSTED] == 0 and st.counters[C_STORED] > 0:
        for _ in range(churn_steps):
            clear_cell(st, random_occupied_cell(st))
            done = False
            while True:
                if not _next_key(key, key_rng, trace, pos):
                    stats[S_TRACE_EXHAUSTED] = 1
                    break
                out = insert(st, key, splitmix_next(st.rng) & vmask)
                if out == UPDATED:
                    # key already present; the removed slot is still open
                    stats[S_DUPLICATES] += 1
                    continue
                stats[S_CHURN_ATTEMPTS] += 1
                if out == INSERTED:
                    done = True
                    break
                if out == UNRESOLVABLE:
                    stats[S_CHURN_FAILURES] += 1
                    continue
                stats[S_TABLE_FULL] = 1
                break
            if not done:
                break
            stats[S_CHURN_STEPS] += 1

    if st.counters[C_STORED] > 0:
        reads0 = st.counters[C_LOOKUP_READS]
        for _ in range(audit_n):
            cell = random_occupied_cell(st)
            found, v = lookup(st, st.keys[cell])
            stats[S_AUDIT_LOOKUPS] += 1
            if found and v == st.val[cell]:
                stats[S_AUDIT_CORRECT] += 1
        stats[S_AUDIT_READS] = st.counters[C_LOOKUP_READS] - reads0
