"""Deterministic random substreams.

Every unit of work (a row block, a bootstrap replicate, a simulation replicate)
receives its own PCG64 generator whose seed sequence is the run seed extended
by a spawn key. Keys are built from stable integers only, so the stream a unit
gets never depends on thread scheduling or worker count.
"""
from typing import Tuple

import numpy as np

from ..utils import HashUtils

GENERATOR_NAME = "numpy.PCG64/ziggurat"


class RandomStreams:
    """Tree of reproducible random streams rooted at a 64-bit seed"""

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)

    def child(self, *parts) -> "RandomStreams":
        """Derive a sub-tree; string parts are hashed to stable integers"""
        return RandomStreams(self.seed, self.key + tuple(HashUtils.stable_int(p) for p in parts))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)

    def generator(self, *parts) -> np.random.Generator:
        """Generator for the stream at this node (or at a child of it)"""
        node = self.child(*parts) if parts else self
        return np.random.Generator(np.random.PCG64(node.seed_sequence()))

    def derive_seed(self, *parts) -> int:
        """Unsigned 64-bit seed for the node at ``parts``, for handing to an independent run"""
        node = self.child(*parts) if parts else self
        return int(node.seed_sequence().generate_state(1, dtype=np.uint64)[0])

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed}, key={self.key})"
