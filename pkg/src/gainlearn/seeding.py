"""Deterministic seed derivation.

All randomness in the package flows through one master seed per run.
Sub-seeds (per trajectory, per iteration, per sweep cell) are derived with
SplitMix64 so that the derivation is a documented 64-bit integer function,
reproducible independently of numpy internals:

    h = splitmix64(master)
    for each index i:  h = splitmix64(h ^ splitmix64(i))

The derived value seeds a PCG64 generator.
"""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One SplitMix64 step (Steele, Lea & Flood's finalizer constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master: int, *indices: int) -> int:
    """Fold integer indices into a master seed, one SplitMix64 step each."""
    h = splitmix64(master & _MASK64)
    for ix in indices:
        h = splitmix64(h ^ splitmix64(ix & _MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & _MASK64))
