"""Classical diversity indices."""
from __future__ import annotations

import numpy as np

from .partitions import PartitionCounts

__all__ = ["shannon_entropy"]


def shannon_entropy(blocks) -> float:
    """Shannon entropy -sum pi_i ln pi_i (nats) of block sizes or a PartitionCounts."""
    if isinstance(blocks, PartitionCounts):
        blocks = blocks.block_sizes()
    n_i = np.asarray(list(blocks), dtype=float)
    if n_i.size == 0 or np.any(n_i <= 0):
        raise ValueError("blocks must be a nonempty list of positive sizes")
    pi = n_i / n_i.sum()
    return float(max(0.0, -np.sum(pi * np.log(pi))))
