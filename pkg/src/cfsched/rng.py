"""Seeded, splittable random streams.

Every random object is drawn from a Philox (counter-based) generator keyed by
``(seed, *stream_key)``, so a partition, a trial block or a worker can be
regenerated in isolation and results do not depend on how work is split.
"""

import secrets

import numpy as np


def fresh_seed() -> int:
    """A random 63-bit seed for runs where the user did not pass one."""
    return secrets.randbits(63)


def stream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed and stream keys must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def sample_subsets(gen: np.random.Generator, n: int, k: int, count: int) -> np.ndarray:
    """``count`` uniform k-subsets of [0, n), one sorted row each.

    Floyd's algorithm, vectorized across rows: for j = n-k..n-1 draw t in
    [0, j] and take t unless already chosen, else j. Exactly k draws per row,
    no rejection, memory O(count * k) regardless of n.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    out = np.empty((count, k), dtype=np.int64)
    for i, j in enumerate(range(n - k, n)):
        t = gen.integers(0, j + 1, size=count)
        if i:
            taken = (out[:, :i] == t[:, None]).any(axis=1)
            t = np.where(taken, j, t)
        out[:, i] = t
    out.sort(axis=1)
    return out
