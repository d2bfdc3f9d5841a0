"""Seed derivation for reproducible Monte Carlo batches.

A single master seed expands into per-run seeds, and each run's seed expands
into substream seeds (one for the simulator, one for the filter), via the
splitmix64 mix function.  Workers therefore never share generator state, and
run r's results do not depend on how many runs execute or in what order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: (output, next state)."""
    state = (state + _GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK, state


def derive_seeds(master: int, n: int) -> list[int]:
    """The first n outputs of the splitmix64 stream started at master."""
    state = master & _MASK
    out = []
    for _ in range(n):
        value, state = splitmix64(state)
        out.append(value)
    return out


def substream(seed: int, index: int) -> int:
    """The index-th derived seed of a stream (index 0 = first output)."""
    return derive_seeds(seed, index + 1)[index]


def generator(seed: int) -> np.random.Generator:
    """A fresh PCG64 generator for a derived 64-bit seed."""
    return np.random.default_rng(seed)
