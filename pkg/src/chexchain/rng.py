"""Named random substreams derived from a single run seed.

Every source of randomness in a run (parameter init, dataset split,
augmentation, batch sampling) draws from its own substream so that changing
how one component consumes randomness never perturbs the others.
"""

import zlib

import numpy as np

# Fixed substream names used by the pipeline.
STREAM_INIT = "init"
STREAM_SPLIT = "split"
STREAM_AUGMENT = "augment"
STREAM_BATCHING = "batching"


def _name_key(name: str) -> int:
    # crc32 is stable across processes and platforms; hash() is salted.
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the (seed, name) substream.

    Deterministic: the same (seed, name) pair always yields the same stream,
    and distinct names yield statistically independent streams.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _name_key(name)])
    return np.random.Generator(np.random.PCG64(ss))


def child_substream(seed: int, name: str, index: int) -> np.random.Generator:
    """Per-item stream, e.g. one augmentation stream per (update, example)."""
    ss = np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFF, _name_key(name), int(index) & 0xFFFFFFFFFFFF]
    )
    return np.random.Generator(np.random.PCG64(ss))
