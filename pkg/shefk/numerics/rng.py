"""
Random stream keying
Every draw is taken from a generator keyed by (seed, role, index), so a
sample never depends on which worker produced it or in which order
"""

import logging
from enum import IntEnum

import numpy as np

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1


class StreamRole(IntEnum):
    """Independent families of streams"""
    PATHS = 0
    NOISE = 1
    RESAMPLE = 2
    SIMPLEX = 3
    AUXILIARY = 4


def stream(seed: int, role: StreamRole, index: int) -> np.random.Generator:
    """
    Generator for one (seed, role, index) key

    Args:
        seed: Global 64-bit unsigned seed
        role: Stream family
        index: Sample index within the family

    Returns:
        numpy Generator (PCG64) seeded from SeedSequence(seed, spawn_key=(role, index))
    """
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    sequence = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=(int(role), int(index)))
    return np.random.Generator(np.random.PCG64(sequence))


class RngStream:
    """
    A deterministic seeded stream handed to samplers

    Thin wrapper so call sites can carry the key alongside the generator.
    """

    def __init__(self, seed: int, role: StreamRole = StreamRole.PATHS, index: int = 0):
        self.seed = int(seed) & SEED_MASK
        self.role = StreamRole(role)
        self.index = int(index)
        self.generator = stream(self.seed, self.role, self.index)

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size) -> np.ndarray:
        return self.generator.random(size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, role={self.role.name}, index={self.index})"
