"""Key encoding and the seeded hash family.

Every hash in the structure is one keyed 64-bit function evaluated with a
different seed:

    fixed fingerprint   low f_bits of H(x, seed_fixed)
    adaptive value k    low a_bits of H(x, seed_selector[k])
    first bucket p1     H(x, seed_pos) masked to the bucket-index width
    bucket offset       G(f, seed_offset) masked to the same width

so p2 = p1 ^ offset(f) on the second table. The low-level functions are
numba-compiled so the table kernels can call them directly.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numba import njit, uint64

MASK64 = (1 << 64) - 1

_P1 = uint64(0x9E3779B185EBCA87)
_P2 = uint64(0xC2B2AE3D27D4EB4F)
_P3 = uint64(0x165667B19E3779F9)
_GOLDEN = uint64(0x9E3779B97F4A7C15)
_M1 = uint64(0xFF51AFD7ED558CCD)
_M2 = uint64(0xC4CEB9FE1A85EC53)

MAX_S_BITS = 8
MAX_A_BITS = 32
MAX_F_BITS = 32


@njit(cache=True, inline="always")
def fmix64(h):
    h ^= h >> uint64(33)
    h *= _M1
    h ^= h >> uint64(33)
    h *= _M2
    h ^= h >> uint64(33)
    return h


@njit(cache=True, inline="always")
def _rotl(x, r):
    return (x << uint64(r)) | (x >> uint64(64 - r))


@njit(cache=True)
def hash_bytes(data, seed):
    """Seeded 64-bit hash of a 1-D uint8 array."""
    n = data.shape[0]
    h = uint64(seed) ^ (uint64(n) * _P1)
    i = 0
    while i + 8 <= n:
        w = uint64(0)
        for j in range(8):
            w |= uint64(data[i + j]) << uint64(8 * j)
        h ^= fmix64(w * _P2 + uint64(seed))
        h = _rotl(h, 27) * _P1 + _P3
        i += 8
    if i < n:
        w = uint64(0)
        for j in range(n - i):
            w |= uint64(data[i + j]) << uint64(8 * j)
        h ^= fmix64(w * _P3 + uint64(seed) + _GOLDEN)
        h = _rotl(h, 31) * _P2 + _P1
    return fmix64(h ^ uint64(seed) ^ uint64(n))


@njit(cache=True, inline="always")
def hash_u64(v, seed):
    return fmix64((uint64(v) + _GOLDEN) * _P2 ^ uint64(seed))


@njit(cache=True, inline="always")
def splitmix_next(state):
    """Advance a one-element uint64 state array and return the next draw."""
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(cache=True, inline="always")
def rand_below(state, n):
    """Uniform integer in [0, n) for n < 2**32."""
    r = splitmix_next(state) >> uint64(32)
    return np.int64((r * uint64(n)) >> uint64(32))


@njit(cache=True)
def fill_random_key(state, out):
    i = 0
    n = out.shape[0]
    while i < n:
        r = splitmix_next(state)
        for j in range(8):
            if i >= n:
                break
            out[i] = np.uint8((r >> uint64(8 * j)) & uint64(0xFF))
            i += 1


def splitmix64(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of SplitMix64 started at ``seed`` (pure Python)."""
    out = []
    state = seed & MASK64
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class FingerprintConfig:
    """Bit split of one compressed cell: fixed + selector + adaptive value."""

    f_bits: int
    a_bits: int
    s_bits: int

    def __post_init__(self):
        if not 1 <= self.f_bits <= MAX_F_BITS:
            raise ValueError(f"f_bits must be in [1, {MAX_F_BITS}], got {self.f_bits}")
        if not 1 <= self.a_bits <= MAX_A_BITS:
            raise ValueError(f"a_bits must be in [1, {MAX_A_BITS}], got {self.a_bits}")
        if not 0 <= self.s_bits <= MAX_S_BITS:
            raise ValueError(f"s_bits must be in [0, {MAX_S_BITS}], got {self.s_bits}")

    @property
    def total_bits(self) -> int:
        return self.f_bits + self.a_bits + self.s_bits

    @property
    def num_selectors(self) -> int:
        return 1 << self.s_bits

    @classmethod
    def from_split(cls, split: str) -> "FingerprintConfig":
        """Parse ``"f,a,s"``."""
        parts = [int(p) for p in split.split(",")]
        if len(parts) != 3:
            raise ValueError(f"split must be 'f,a,s', got {split!r}")
        return cls(*parts)


@dataclass(frozen=True)
class TableGeometry:
    buckets_per_table: int
    cells_per_bucket: int = 4
    tables: int = field(default=2, init=False)

    def __post_init__(self):
        b = self.buckets_per_table
        if b < 1 or b & (b - 1):
            raise ValueError(f"buckets_per_table must be a power of two, got {b}")
        if self.cells_per_bucket < 1:
            raise ValueError("cells_per_bucket must be >= 1")

    @property
    def total_buckets(self) -> int:
        return 2 * self.buckets_per_table

    @property
    def total_cells(self) -> int:
        return 2 * self.buckets_per_table * self.cells_per_bucket

    @property
    def index_mask(self) -> int:
        return self.buckets_per_table - 1


@dataclass(frozen=True)
class HashSeeds:
    """Seeds for h_f, h_1, h_2 and the selector family, all from one master seed."""

    seed_fixed: int
    seed_pos: int
    seed_offset: int
    seed_selector: tuple[int, ...]

    @classmethod
    def derive(cls, master_seed: int, cfg: FingerprintConfig) -> "HashSeeds":
        draws = splitmix64(master_seed, 3 + cfg.num_selectors)
        # SplitMix64 is a bijection of its counter, so the draws are distinct
        assert len(set(draws)) == len(draws)
        return cls(draws[0], draws[1], draws[2], tuple(draws[3:]))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.seed_fixed, self.seed_pos, self.seed_offset, *self.seed_selector],
            dtype=np.uint64,
        )


# ---------------------------------------------------------------------------
# compiled hash evaluation used by the kernels
# seeds array layout: [fixed, pos, offset, selector_0, selector_1, ...]


@njit(cache=True, inline="always")
def k_fixed_fp(key, seeds, f_mask):
    return hash_bytes(key, seeds[0]) & uint64(f_mask)


@njit(cache=True, inline="always")
def k_selector_hash(key, k, seeds, a_mask):
    return hash_bytes(key, seeds[3 + k]) & uint64(a_mask)


@njit(cache=True, inline="always")
def k_offset(f, seeds, b_mask):
    return np.int64(hash_u64(f, seeds[2]) & uint64(b_mask))


@njit(cache=True, inline="always")
def k_locate(key, seeds, f_mask, b_mask):
    f = k_fixed_fp(key, seeds, f_mask)
    p1 = np.int64(hash_bytes(key, seeds[1]) & uint64(b_mask))
    p2 = p1 ^ k_offset(f, seeds, b_mask)
    return p1, p2, np.int64(f)


# ---------------------------------------------------------------------------
# Python-facing API

KeyLike = Union[bytes, bytearray, memoryview]


def _as_array(x: KeyLike) -> np.ndarray:
    return np.frombuffer(bytes(x), dtype=np.uint8)


def fixed_fingerprint(x: KeyLike, cfg: FingerprintConfig, seeds: HashSeeds) -> int:
    return int(hash_bytes(_as_array(x), uint64(seeds.seed_fixed))) & ((1 << cfg.f_bits) - 1)


def selector_hash(x: KeyLike, k: int, cfg: FingerprintConfig, seeds: HashSeeds) -> int:
    if not 0 <= k < cfg.num_selectors:
        raise ValueError(f"selector {k} out of range [0, {cfg.num_selectors})")
    return int(hash_bytes(_as_array(x), uint64(seeds.seed_selector[k]))) & ((1 << cfg.a_bits) - 1)


def offset_of(f: int, geom: TableGeometry, seeds: HashSeeds) -> int:
    """Masked h_2(f): the xor distance between an entry's two buckets."""
    return int(hash_u64(uint64(f), uint64(seeds.seed_offset))) & geom.index_mask


def positions(
    x: KeyLike, geom: TableGeometry, cfg: FingerprintConfig, seeds: HashSeeds
) -> tuple[int, int, int]:
    """Return ``(p1, p2, f)``: bucket in table 1, bucket in table 2, fixed fingerprint."""
    f = fixed_fingerprint(x, cfg, seeds)
    p1 = int(hash_bytes(_as_array(x), uint64(seeds.seed_pos))) & geom.index_mask
    return p1, p1 ^ offset_of(f, geom, seeds), f


def partner_of(
    p: int, f: int, which_table: int, geom: TableGeometry, seeds: HashSeeds
) -> int:
    """Bucket in the other table for an entry with fingerprint ``f`` sitting at ``p``.

    The same xor serves both directions, so no full key is needed.
    """
    if which_table not in (0, 1):
        raise ValueError("which_table must be 0 or 1")
    if not 0 <= p < geom.buckets_per_table:
        raise ValueError(f"bucket {p} out of range")
    return p ^ offset_of(f, geom, seeds)


# ---------------------------------------------------------------------------
# 5-tuples


@dataclass(frozen=True)
class FiveTuple:
    src_addr: Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
    dst_addr: Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
    src_port: int
    dst_port: int
    protocol: int

    def __post_init__(self):
        object.__setattr__(self, "src_addr", ipaddress.ip_address(self.src_addr))
        object.__setattr__(self, "dst_addr", ipaddress.ip_address(self.dst_addr))
        if self.src_addr.version != self.dst_addr.version:
            raise ValueError("src_addr and dst_addr must be the same address family")
        for name in ("src_port", "dst_port"):
            if not 0 <= getattr(self, name) < 1 << 16:
                raise ValueError(f"{name} must fit in 16 bits")
        if not 0 <= self.protocol < 1 << 8:
            raise ValueError("protocol must fit in 8 bits")


IPV4_KEY_LEN = 13
IPV6_KEY_LEN = 37


def encode_five_tuple(t: FiveTuple) -> bytes:
    """Canonical big-endian layout: src | dst | sport | dport | proto."""
    return (
        t.src_addr.packed
        + t.dst_addr.packed
        + t.src_port.to_bytes(2, "big")
        + t.dst_port.to_bytes(2, "big")
        + t.protocol.to_bytes(1, "big")
    )


def decode_five_tuple(key: bytes) -> FiveTuple:
    if len(key) == IPV4_KEY_LEN:
        w = 4
    elif len(key) == IPV6_KEY_LEN:
        w = 16
    else:
        raise ValueError(f"not a 5-tuple key: {len(key)} bytes")
    return FiveTuple(
        ipaddress.ip_address(key[:w]),
        ipaddress.ip_address(key[w : 2 * w]),
        int.from_bytes(key[2 * w : 2 * w + 2], "big"),
        int.from_bytes(key[2 * w + 2 : 2 * w + 4], "big"),
        key[-1],
    )
