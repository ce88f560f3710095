import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cucotrack.hashing import FingerprintConfig, HashSeeds, TableGeometry, positions

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=100
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=30)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def keys_sharing(geom, cfg, seeds, count, key_len=13, rng_seed=0, target=None, limit=2_000_000):
    """Rejection-sample ``count`` distinct keys with one shared (p1, p2, f).

    ``target`` fixes the triple; otherwise the first key drawn sets it.
    """
    rng = np.random.default_rng(rng_seed)
    found = []
    for _ in range(limit):
        k = rng.bytes(key_len)
        pos = positions(k, geom, cfg, seeds)
        if target is None:
            target = pos
        if pos == target and k not in found:
            found.append(k)
            if len(found) == count:
                return found, target
    raise RuntimeError("rejection sampling exhausted")


def brute_force_adaptable(values) -> bool:
    """Try every joint selector assignment; True if one makes every lookup unambiguous.

    A query for member o compares hash_{k_j}(o) with member j's stored
    hash_{k_j}(j) for every other member j.
    """
    n, nsel = len(values), len(values[0])
    for combo in itertools.product(range(nsel), repeat=n):
        if all(values[o][combo[j]] != values[j][combo[j]] for j in range(n) for o in range(n) if o != j):
            return True
    return False


@pytest.fixture
def small_cfg():
    return TableGeometry(64), FingerprintConfig(4, 2, 2), HashSeeds.derive(7, FingerprintConfig(4, 2, 2))
