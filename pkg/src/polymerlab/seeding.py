"""Deterministic derivation of child random streams from a master seed.

Every stochastic component of the package draws from a stream obtained as

    child = splitmix64_mix(master_seed XOR (purpose_tag * GOLDEN + index))

with all arithmetic mod 2**64 and GOLDEN = 0x9E3779B97F4A7C15.  The mixing
function is the SplitMix64 output finalizer.  The derivation is bit-exact and
documented so that the partition of randomness into streams is reproducible;
the generator fed with the child seed (here: NumPy's PCG64) is an
implementation choice.

Purpose-tag registry:

    ==================  ===
    replica paths        1
    environment steps    2
    spectral frequencies 3
    spectral coefficients 4
    resampling           5
    ==================  ===
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

PURPOSE_PATHS = 1
PURPOSE_ENVIRONMENT = 2
PURPOSE_FREQUENCIES = 3
PURPOSE_COEFFICIENTS = 4
PURPOSE_RESAMPLING = 5

PURPOSE_TAGS = {
    "paths": PURPOSE_PATHS,
    "environment": PURPOSE_ENVIRONMENT,
    "frequencies": PURPOSE_FREQUENCIES,
    "coefficients": PURPOSE_COEFFICIENTS,
    "resampling": PURPOSE_RESAMPLING,
}


def splitmix64_mix(value: int) -> int:
    """SplitMix64 output finalizer on a 64-bit value."""
    z = value & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master_seed: int, purpose: int, index: int = 0) -> int:
    """Child seed for stream (purpose, index) under the given master seed."""
    if not 0 <= master_seed <= _MASK:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    if index < 0:
        raise ValueError("index must be nonnegative")
    return splitmix64_mix(master_seed ^ ((purpose * GOLDEN + index) & _MASK))


def stream(master_seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """PCG64 generator seeded with the derived child seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, purpose, index)))
