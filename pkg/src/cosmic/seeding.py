"""Named RNG substreams derived from a single master seed.

Every source of randomness in a run (task sampling, mix-up partners, weight
init, evaluation) draws from its own substream so components can be perturbed
independently without disturbing the others.
"""

from __future__ import annotations

import numpy as np

# Fixed ids keep substreams stable across versions; never renumber.
_STREAM_IDS = {
    "graph": 0,
    "sampler": 1,
    "mixup": 2,
    "init": 3,
    "eval": 4,
}


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return a Generator for the named substream of ``seed``.

    Extra ``indices`` (e.g. an episode number) select per-step children of
    the stream. Same arguments always produce the same stream, on every
    platform.
    """
    try:
        stream_id = _STREAM_IDS[name]
    except KeyError:
        raise ValueError(f"unknown substream {name!r}; known: {sorted(_STREAM_IDS)}")
    entropy = [int(seed), stream_id, *[int(i) for i in indices]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
