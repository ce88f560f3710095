"""Cuckoo-hash connection tracking with compressed, collision-free adaptive fingerprints."""

from .hashing import (
    FingerprintConfig,
    FiveTuple,
    HashSeeds,
    TableGeometry,
    encode_five_tuple,
    fixed_fingerprint,
    partner_of,
    positions,
    selector_hash,
)
from .model import ModelParams, dynamic_failure, expected_unresolvable, sweep
from .table import ConflictGroup, CuCoTrack, InsertOutcome, assign_selectors

__version__ = "0.1.0"
