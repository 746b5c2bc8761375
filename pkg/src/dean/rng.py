"""Deterministic seed derivation.

Every randomized component draws from its own ``numpy`` generator whose
seed is derived by ``mix64``, so parallel scheduling can never change
results: submodel ``i`` always sees the same stream no matter which thread
runs it.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(seed: int, index: int) -> int:
    """Return the ``index``-th output of a splitmix64 sequence seeded with ``seed``.

    Standard splitmix64: advance the state by (index+1) golden-ratio
    increments, then apply the finalizer.  Output is a 64-bit unsigned int.
    """
    z = (int(seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def generator(seed: int, index: int = 0) -> np.random.Generator:
    """A fresh PCG64 generator for stream ``index`` of ``seed``."""
    return np.random.default_rng(mix64(seed, index))
