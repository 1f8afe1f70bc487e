"""Named, stable sub-seeds derived from one run seed."""

import zlib

import numpy as np


def derive_seed(seed: int, *tags) -> int:
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for tag in tags:
        words.append(tag if isinstance(tag, int) else zlib.crc32(str(tag).encode()))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def rng_for(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))
