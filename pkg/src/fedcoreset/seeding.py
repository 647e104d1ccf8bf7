"""Deterministic derivation of independent child seeds from one run seed."""

from __future__ import annotations

import numpy as np


def child_seeds(seed: int, n: int) -> list[int]:
    """n independent integer seeds derived from seed, stable across runs."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]
