"""Seed fan-out.

A single root seed is expanded into per-stage / per-component seeds with
splitmix64, so that every stage owns an independent deterministic stream and
adding a stage never shifts the seeds of the others.  Labels are folded in
with FNV-1a so the derivation reads `derive_seed(root, "hrvq", "init")`.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step (Steele et al., the standard finalizer)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(root: int, *labels: str | int) -> int:
    """Derive a child seed from `root` and a label path."""
    x = root & _MASK
    for label in labels:
        if isinstance(label, int):
            x = splitmix64(x ^ (label & _MASK))
        else:
            x = splitmix64(x ^ fnv1a64(label))
    return splitmix64(x)


def generator(root: int, *labels: str | int) -> np.random.Generator:
    """Seeded numpy generator for the given label path."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *labels)))
