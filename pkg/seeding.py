"""Seeded random number generation.

All stochastic operations draw from `numpy.random.Generator` backed by PCG64, whose output
stream is fixed by numpy's version policy for a given seed.
"""
import enum

import numpy as np


class Stream(enum.IntEnum):
    """Independent seed streams derived from a single run seed."""
    GRAPH = 0
    SHUFFLE = 1
    SPLIT = 2
    SOURCES = 3
    SYNTH = 4


_MAX_SEED = 2**64 - 1


def make_rng(seed: int) -> np.random.Generator:
    """Create a PCG64 generator for the 64-bit unsigned `seed`."""
    if not 0 <= seed <= _MAX_SEED:
        raise ValueError("Seed %d is not a 64-bit unsigned integer." % seed)
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, stream: Stream, index: int = 0) -> int:
    """Derive the seed of `stream` from the run seed.

    :param index: Distinguishes repeated uses of the same stream, e.g. consecutive runs.
    """
    state = np.random.SeedSequence([seed, int(stream), index]).generate_state(1, np.uint64)
    return int(state[0])
