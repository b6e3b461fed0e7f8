"""Deterministic seed derivation shared by training, evaluation and attacks."""

from __future__ import annotations

import zlib

import numpy as np


def _as_entropy(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(*parts) -> int:
    """Stable integer seed from a tuple of ints/strings."""
    ss = np.random.SeedSequence([_as_entropy(p) for p in parts])
    return int(ss.generate_state(1, np.uint32)[0])


def make_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_as_entropy(p) for p in parts]))
