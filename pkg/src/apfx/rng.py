"""Counter-based random streams.

Every sampled object in the package draws from a Philox generator keyed by
(seed, index path).  Streams for different scenarios/trials are independent
and reproducible regardless of evaluation order, so scenario loops can be
reordered or parallelized without changing results.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _fold(path: tuple[int, ...]) -> int:
    # splitmix-style fold of an index tuple into one 64-bit word
    acc = len(path) & _MASK64
    for p in path:
        acc = (acc * _GOLDEN + (int(p) & _MASK64) + 1) & _MASK64
    return acc


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream keyed by (seed, *path).

    A pure function of its arguments: the j-th draw from substream(seed, m)
    depends on nothing but (seed, m, j).
    """
    key = np.array([int(seed) & _MASK64, _fold(path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
