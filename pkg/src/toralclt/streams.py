"""Counter-based random streams.

Every Monte Carlo loop in the package draws from a Philox generator
keyed by (seed, path).  Substreams indexed by trial or task id are
statistically independent and do not depend on how work is split
across workers, so parallel runs reproduce serial ones bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MIX = 0x9E3779B97F4A7C15


def _mix_path(path) -> int:
    h = 0
    for v in path:
        h = (h * _MIX + int(v) + 1) & _MASK64
    return h


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for a (seed, path) pair; distinct paths give distinct keys."""
    key = np.array([int(seed) & _MASK64, _mix_path(path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
