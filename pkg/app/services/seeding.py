"""Named random sub-streams derived from one experiment seed."""

import numpy as np

STREAMS = ("generator", "split", "sampler", "replicate")


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """
    Independent generator for (seed, name, index...).

    Args:
        seed: Experiment seed, non-negative.
        name: One of STREAMS.
        index: Optional replicate/fold numbers.

    Returns:
        A PCG64 generator; the same arguments always give the same stream.
    """
    if name not in STREAMS:
        raise ValueError(f"unknown random stream {name!r}; expected one of {STREAMS}")
    if seed < 0 or any(i < 0 for i in index):
        raise ValueError("seeds and stream indices must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, STREAMS.index(name), *index]))


def int_seed(rng: np.random.Generator) -> int:
    """A 32-bit integer seed for libraries that take plain ints (networkx)."""
    return int(rng.integers(0, 2**32 - 1))
