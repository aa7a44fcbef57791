"""Stable sub-seed derivation: every random stream descends from one integer seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *purpose) -> int:
    """63-bit seed from ``seed`` and a purpose path, stable across platforms and runs."""
    text = "/".join([str(int(seed))] + [str(p) for p in purpose])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little") >> 1


def rng_for(seed: int, *purpose) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *purpose))
