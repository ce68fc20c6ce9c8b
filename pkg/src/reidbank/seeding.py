"""Named RNG sub-streams derived from a single run seed.

Every randomized stage draws from its own stream so that changing one
stage's parameters never perturbs the draws of another stage.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


def _tag_entropy(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "little")


def substream(seed: int, *tags: str) -> np.random.Generator:
    """Generator for the (seed, tags) stream; identical inputs give identical streams."""
    entropy = [int(seed) & _SEED_MASK] + [_tag_entropy(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def stage_seed(seed: int, *tags: str) -> int:
    """64-bit seed for a named stage, for APIs that take a plain integer seed."""
    entropy = [int(seed) & _SEED_MASK] + [_tag_entropy(t) for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
