"""Deterministic random-stream derivation.

Every stochastic step in the benchmark draws from a generator derived
from the experiment seed plus a string path naming the step.  Streams
for different paths are independent, and adding a new step never
shifts the draws of an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(seed: int, *path: str) -> np.random.Generator:
    """Return a Generator keyed by ``seed`` and a path of string tags."""
    words = [seed & 0xFFFFFFFF]
    for tag in path:
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    return np.random.default_rng(np.random.SeedSequence(words))
