"""Deterministic named RNG streams.

All randomness in the package flows through streams derived from one 64-bit
run seed plus a stream name; nothing reads ambient entropy.  Requesting the
same (seed, name) twice yields an identical, independent generator.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV_VAR = "IBOL_LAB_SEED"


def named_stream(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF] + words))


class SeedBank:
    """Hands out named sub-streams for one run."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, name: str) -> np.random.Generator:
        return named_stream(self.seed, name)


def resolve_seed(explicit: int | None) -> int:
    """CLI seed, falling back to the IBOL_LAB_SEED environment variable."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return 0
