"""Deterministic child-seed derivation.

Every stochastic stage derives its own rng from (user seed, stage tags) so
that runs replay bit-for-bit and sub-computations can be recomputed
standalone with the same draws.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed"]


def derive_seed(*components: int) -> int:
    """Mix integer components into one 32-bit seed, order-sensitive."""
    if not components:
        raise ValueError("need at least one seed component")
    entropy = []
    for c in components:
        c = int(c)
        if c < 0:
            raise ValueError("seed components must be nonnegative")
        entropy.append(c)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
