"""Deterministic randomness: one root seed fans out through labeled derivation.

Every random stream in the package is obtained as ``rng_for(root, label)``
with a stable label such as ``"train/shuffle/epoch-7"`` or ``"tree-42"``, so a
run is reproducible from the root seed alone and the seeding topology is easy
to mirror in other implementations.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, label: str) -> int:
    """Map (root seed, label) to a 64-bit child seed via SHA-256."""
    digest = hashlib.sha256(f"{root}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, label))
