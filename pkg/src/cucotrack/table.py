"""CuCoTrack: two 4-cell bucket tables of compressed entries plus a full-key mirror."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .hashing import (
    IPV4_KEY_LEN,
    FingerprintConfig,
    HashSeeds,
    KeyLike,
    TableGeometry,
    positions,
    selector_hash,
)

DEFAULT_MAX_KICKS = 500
DEFAULT_VALUE_BITS = 32


class InsertOutcome(enum.Enum):
    INSERTED = K.INSERTED
    UPDATED_EXISTING = K.UPDATED
    UNRESOLVABLE_COLLISION = K.UNRESOLVABLE
    TABLE_FULL = K.TABLE_FULL


@dataclass(frozen=True)
class Cell:
    occupied: bool
    fixed_fp: int
    selector: int
    adaptive: int
    value: int


@dataclass(frozen=True)
class ConflictGroup:
    """Stored elements sharing a bucket pair and fixed fingerprint."""

    p1: int
    p2: int
    fixed_fp: int
    members: tuple[tuple[int, int, int], ...]  # (table, bucket, cell)
    keys: tuple[bytes, ...]
    selectors: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.members)


class InvariantError(AssertionError):
    pass


def assign_selectors(values, current=None) -> Optional[list[int]]:
    """Selector per member making each member's adaptive value unique in its group.

    ``values[j][k]`` is member j's adaptive hash under selector k and
    ``current[j]`` its existing selector (None or -1 for a new member).
    Members whose current selector is still valid keep it; the rest take the
    lowest valid selector. Returns None when some member has no valid choice.
    """
    hv = np.asarray(values, dtype=np.int64)
    if hv.ndim != 2:
        raise ValueError("values must be a members x selectors matrix")
    if current is None:
        cur = np.full(hv.shape[0], -1, dtype=np.int64)
    else:
        cur = np.array([-1 if c is None else c for c in current], dtype=np.int64)
    ok, out = K.assign_selectors(hv, cur)
    return [int(v) for v in out] if ok else None


class CuCoTrack:
    """Connection-tracking table storing (fixed fp, selector, adaptive value, value) per cell.

    Full keys live in a same-shaped backing store that models slow external
    memory; it is read only for duplicate detection, adaptation and exact
    removal. Lookups read exactly two buckets.

    >>> t = CuCoTrack(buckets_per_table=16, f_bits=8, a_bits=3, s_bits=5, key_len=4)
    >>> t.insert(b"abcd", 7)
    <InsertOutcome.INSERTED: 0>
    >>> t.lookup(b"abcd")
    7
    """

    def __init__(
        self,
        buckets_per_table: int = 8192,
        cells_per_bucket: int = 4,
        f_bits: int = 8,
        a_bits: int = 3,
        s_bits: int = 5,
        value_bits: int = DEFAULT_VALUE_BITS,
        seed: int = 0,
        key_len: int = IPV4_KEY_LEN,
        max_kicks: int = DEFAULT_MAX_KICKS,
    ):
        if not 1 <= value_bits <= 64:
            raise ValueError("value_bits must be in [1, 64]")
        if key_len < 1:
            raise ValueError("key_len must be positive")
        if max_kicks < 1:
            raise ValueError("max_kicks must be positive")
        self.geometry = TableGeometry(buckets_per_table, cells_per_bucket)
        self.config = FingerprintConfig(f_bits, a_bits, s_bits)
        self.seeds = HashSeeds.derive(seed, self.config)
        self.value_bits = value_bits
        self.key_len = key_len
        self.max_kicks = max_kicks
        self.seed = seed

        n = self.geometry.total_cells
        params = np.zeros(K.NPARAMS, dtype=np.int64)
        params[K.P_BUCKETS] = buckets_per_table
        params[K.P_CELLS] = cells_per_bucket
        params[K.P_FMASK] = (1 << f_bits) - 1
        params[K.P_AMASK] = (1 << a_bits) - 1
        params[K.P_NSEL] = self.config.num_selectors
        # value mask stored as the signed view of the uint64 mask
        params[K.P_VMASK] = np.array([(1 << value_bits) - 1], dtype=np.uint64).view(np.int64)[0]
        params[K.P_MAX_KICKS] = max_kicks
        self._st = K.TableState(
            occ=np.zeros(n, np.uint8),
            fp=np.zeros(n, np.uint32),
            sel=np.zeros(n, np.uint8),
            adp=np.zeros(n, np.uint32),
            val=np.zeros(n, np.uint64),
            present=np.zeros(n, np.uint8),
            keys=np.zeros((n, key_len), np.uint8),
            seeds=self.seeds.as_array(),
            params=params,
            counters=np.zeros(K.NCOUNTERS, np.int64),
            rng=np.array([seed ^ 0x5DEECE66D], dtype=np.uint64),
            path=np.zeros(max_kicks, np.int64),
            scratch=np.zeros(key_len, np.uint8),
        )

    @staticmethod
    def estimated_bytes(buckets_per_table: int, cells_per_bucket: int, key_len: int) -> int:
        """Memory the arrays of a table of this shape would occupy."""
        per_cell = 1 + 4 + 1 + 4 + 8 + 1 + key_len
        return 2 * buckets_per_table * cells_per_bucket * per_cell

    # -- helpers -----------------------------------------------------------

    def _key(self, x: KeyLike) -> np.ndarray:
        a = np.frombuffer(bytes(x), dtype=np.uint8)
        if a.shape[0] != self.key_len:
            raise ValueError(f"key must be {self.key_len} bytes, got {a.shape[0]}")
        return a

    def _flat(self, table: int, bucket: int, cell: int) -> int:
        g = self.geometry
        return (table * g.buckets_per_table + bucket) * g.cells_per_bucket + cell

    def _unflat(self, flat: int) -> tuple[int, int, int]:
        g = self.geometry
        tb, i = divmod(flat, g.cells_per_bucket)
        t, b = divmod(tb, g.buckets_per_table)
        return t, b, i

    @property
    def state(self) -> K.TableState:
        return self._st

    # -- counters ----------------------------------------------------------

    def __len__(self) -> int:
        return int(self._st.counters[K.C_STORED])

    @property
    def stored_count(self) -> int:
        return len(self)

    @property
    def bucket_accesses(self) -> int:
        return int(self._st.counters[K.C_BUCKET_READS])

    @property
    def backing_accesses(self) -> int:
        return int(self._st.counters[K.C_BACKING_READS])

    @property
    def kicks(self) -> int:
        return int(self._st.counters[K.C_KICKS])

    @property
    def adaptations(self) -> int:
        return int(self._st.counters[K.C_ADAPTATIONS])

    @property
    def selector_changes(self) -> int:
        return int(self._st.counters[K.C_SELECTOR_CHANGES])

    @property
    def lookup_accesses(self) -> tuple[int, int]:
        """(lookups performed, buckets read by those lookups)."""
        c = self._st.counters
        return int(c[K.C_LOOKUPS]), int(c[K.C_LOOKUP_READS])

    def occupancy(self) -> float:
        return len(self) / self.geometry.total_cells

    # -- operations --------------------------------------------------------

    def positions(self, x: KeyLike) -> tuple[int, int, int]:
        return positions(x, self.geometry, self.config, self.seeds)

    def lookup(self, x: KeyLike) -> Optional[int]:
        """Value of the first cell whose fingerprints match ``x``, else None.

        Keys never inserted may still match (a false match); for stored keys
        the returned value is always their own.
        """
        found, v = K.lookup(self._st, self._key(x))
        return int(v) if found else None

    def insert(self, x: KeyLike, value: int) -> InsertOutcome:
        if not 0 <= value < 1 << self.value_bits:
            raise ValueError(f"value does not fit in {self.value_bits} bits")
        return InsertOutcome(K.insert(self._st, self._key(x), np.uint64(value)))

    def remove(self, x: KeyLike) -> bool:
        return bool(K.remove(self._st, self._key(x)))

    def __contains__(self, x: KeyLike) -> bool:
        p1, p2, f = self.positions(x)
        return K.find_exact(self._st, self._key(x), p1, p2, f) >= 0

    def conflict_group(self, p1: int, p2: int, f: int) -> ConflictGroup:
        members = np.empty(2 * self.geometry.cells_per_bucket, np.int64)
        n = K.collect_group(self._st, p1, p2, f, members)
        flat = [int(m) for m in members[:n]]
        self._st.counters[K.C_BACKING_READS] += n
        return ConflictGroup(
            p1=p1,
            p2=p2,
            fixed_fp=f,
            members=tuple(self._unflat(m) for m in flat),
            keys=tuple(self._st.keys[m].tobytes() for m in flat),
            selectors=tuple(int(self._st.sel[m]) for m in flat),
        )

    def adapt_group(self, group: ConflictGroup, new_key: KeyLike) -> Optional[list[int]]:
        """Selector assignment for ``group`` plus ``new_key`` (last), without writing it."""
        keys = [*group.keys, bytes(new_key)]
        values = [
            [selector_hash(k, s, self.config, self.seeds) for s in range(self.config.num_selectors)]
            for k in keys
        ]
        return assign_selectors(values, [*group.selectors, None])

    def cell(self, table: int, bucket: int, i: int) -> Cell:
        j = self._flat(table, bucket, i)
        st = self._st
        return Cell(bool(st.occ[j]), int(st.fp[j]), int(st.sel[j]), int(st.adp[j]), int(st.val[j]))

    def items(self) -> Iterator[tuple[bytes, int]]:
        st = self._st
        for j in np.flatnonzero(st.occ):
            yield st.keys[j].tobytes(), int(st.val[j])

    def memory_report(self, key_bits: Optional[int] = None) -> dict:
        """Fast-path bits per entry against storing full 5-tuples.

        The backing store is excluded from the compressed figure because it
        models slow external memory touched only on updates.
        """
        compressed = self.config.total_bits + self.value_bits
        report = {
            "compressed_bits": compressed,
            "ipv4_bits": 104 + self.value_bits,
            "ipv6_bits": 296 + self.value_bits,
        }
        if key_bits is not None:
            report["full_key_bits"] = key_bits + self.value_bits
        report["ipv4_ratio"] = report["ipv4_bits"] / compressed
        report["ipv6_ratio"] = report["ipv6_bits"] / compressed
        return report

    # -- diagnostics -------------------------------------------------------

    def check_invariants(self) -> None:
        """Full scan of mirror, position and single-match invariants.

        Recomputes everything from the backing keys with the Python hashing
        API, independently of the compiled insert path.
        """
        st = self._st
        g = self.geometry
        if not np.array_equal(st.occ, st.present):
            raise InvariantError("compressed occupancy and backing store disagree")
        occupied = np.flatnonzero(st.occ)
        if len(occupied) != len(self):
            raise InvariantError(f"stored_count {len(self)} != occupied cells {len(occupied)}")
        for j in occupied:
            t, b, _ = self._unflat(int(j))
            key = st.keys[j].tobytes()
            p1, p2, f = self.positions(key)
            if st.fp[j] != f:
                raise InvariantError(f"cell {j}: fixed fingerprint does not match backing key")
            if st.adp[j] != selector_hash(key, int(st.sel[j]), self.config, self.seeds):
                raise InvariantError(f"cell {j}: adaptive value does not match backing key")
            if b != (p1 if t == 0 else p2):
                raise InvariantError(f"cell {j}: entry outside its candidate bucket")
            matches = 0
            for tt, bb in ((0, p1), (1, p2)):
                for i in range(g.cells_per_bucket):
                    m = self._flat(tt, bb, i)
                    if (
                        st.occ[m]
                        and st.fp[m] == f
                        and st.adp[m] == selector_hash(key, int(st.sel[m]), self.config, self.seeds)
                    ):
                        matches += 1
            if matches != 1:
                raise InvariantError(f"cell {j}: key matches {matches} cells")

    SNAPSHOT_HEADER = "table,bucket,cell,fixed_fp,selector,adaptive,value,key_hex"

    def dump(self, out: Optional[io.TextIOBase] = None) -> str:
        """Occupied cells as ``table,bucket,cell,fixed_fp,selector,adaptive,value,key_hex`` lines."""
        st = self._st
        lines = [self.SNAPSHOT_HEADER]
        for j in np.flatnonzero(st.occ):
            t, b, i = self._unflat(int(j))
            lines.append(
                f"{t},{b},{i},{st.fp[j]},{st.sel[j]},{st.adp[j]},{st.val[j]},{st.keys[j].tobytes().hex()}"
            )
        text = "\n".join(lines) + "\n"
        if out is not None:
            out.write(text)
        return text

    @classmethod
    def load(cls, text: str, **kwargs) -> "CuCoTrack":
        """Rebuild a table from :meth:`dump` output; ``kwargs`` must match the original constructor."""
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        if rows and rows[0] == cls.SNAPSHOT_HEADER:
            rows = rows[1:]
        if rows and "key_len" not in kwargs:
            kwargs["key_len"] = len(bytes.fromhex(rows[0].rsplit(",", 1)[1]))
        tbl = cls(**kwargs)
        st = tbl._st
        for row in rows:
            t, b, i, f, s, a, v, kh = row.split(",")
            j = tbl._flat(int(t), int(b), int(i))
            st.occ[j] = st.present[j] = 1
            st.fp[j], st.sel[j], st.adp[j], st.val[j] = int(f), int(s), int(a), int(v)
            st.keys[j] = np.frombuffer(bytes.fromhex(kh), np.uint8)
        st.counters[K.C_STORED] = len(rows)
        return tbl


__all__ = [
    "Cell",
    "ConflictGroup",
    "CuCoTrack",
    "InsertOutcome",
    "InvariantError",
    "assign_selectors",
]
