"""Integer partitions in multiplicity form.

A partition of ``n`` is stored sparsely as ``{j: m_j}``: ``m_j`` blocks of
size ``j``, zero multiplicities omitted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy.special import gammaln

__all__ = [
    "PartitionCounts",
    "ENUMERATION_CAP",
    "from_block_sizes",
    "from_multiplicity_vector",
    "parse_partition",
    "enumerate_partitions",
    "partition_count",
    "ordering_count",
    "log_ordering_count",
]

ENUMERATION_CAP = 25


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionCounts:
    """Multiplicity vector of a partition: ``multiplicities[j]`` blocks of size ``j``."""

    multiplicities: Mapping[int, int]
    n: int = field(init=False)
    k: int = field(init=False)

    def __post_init__(self):
        clean = {}
        for j, m in self.multiplicities.items():
            j, m = int(j), int(m)
            if j < 1:
                raise PartitionError(f"block size must be >= 1, got {j}")
            if m < 0:
                raise PartitionError(f"multiplicity must be >= 0, got m_{j}={m}")
            if m:
                clean[j] = m
        if not clean:
            raise PartitionError("a partition needs at least one block")
        object.__setattr__(self, "multiplicities", dict(sorted(clean.items())))
        object.__setattr__(self, "n", sum(j * m for j, m in clean.items()))
        object.__setattr__(self, "k", sum(clean.values()))

    def __getitem__(self, j):
        return self.multiplicities.get(j, 0)

    def __hash__(self):
        return hash(tuple(self.multiplicities.items()))

    def items(self):
        return self.multiplicities.items()

    def block_sizes(self) -> list[int]:
        """Expanded block sizes, largest first."""
        return sorted((j for j, m in self.multiplicities.items() for _ in range(m)), reverse=True)

    def dense(self, length: int | None = None) -> np.ndarray:
        """Dense vector ``(m_1, ..., m_length)``; ``length`` defaults to ``n``."""
        length = self.n if length is None else length
        if max(self.multiplicities) > length:
            raise PartitionError(f"block size {max(self.multiplicities)} exceeds vector length {length}")
        out = np.zeros(length)
        for j, m in self.multiplicities.items():
            out[j - 1] = m
        return out

    def __str__(self):
        return ",".join(f"{j}:{m}" for j, m in self.multiplicities.items())


def from_block_sizes(blocks: Iterable[int]) -> PartitionCounts:
    blocks = list(blocks)
    if not blocks:
        raise PartitionError("empty block-size list")
    counts: dict[int, int] = {}
    for b in blocks:
        if int(b) != b or b < 1:
            raise PartitionError(f"block sizes must be positive integers, got {b!r}")
        counts[int(b)] = counts.get(int(b), 0) + 1
    return PartitionCounts(counts)


def from_multiplicity_vector(m) -> PartitionCounts:
    """Inverse of ``PartitionCounts.dense``: ``m[j-1]`` blocks of size ``j``."""
    return PartitionCounts({j + 1: int(c) for j, c in enumerate(np.asarray(m).round().astype(int)) if c})


def parse_partition(text: str) -> PartitionCounts:
    """Parse ``"j:m_j,j:m_j,..."``, e.g. ``"1:1,2:1"``."""
    counts: dict[int, int] = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            j, m = chunk.split(":")
            j, m = int(j), int(m)
        except ValueError:
            raise PartitionError(f"bad partition term {chunk!r}; expected 'j:m_j'") from None
        if j in counts:
            raise PartitionError(f"block size {j} listed twice")
        counts[j] = m
    return PartitionCounts(counts)


def _partitions_desc(n: int, largest: int) -> Iterator[list[int]]:
    if n == 0:
        yield []
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _partitions_desc(n - first, first):
            yield [first] + rest


def enumerate_partitions(n: int, k: int | None = None, cap: int = ENUMERATION_CAP) -> list[PartitionCounts]:
    """All partitions of ``n`` (optionally with exactly ``k`` blocks).

    Output order is deterministic: descending lexicographic on
    ``(m_1, m_2, ..., m_n)``, so the all-singletons partition comes first and
    the single block last.
    """
    if n < 1:
        raise PartitionError(f"n must be positive, got {n}")
    if n > cap:
        raise PartitionError(f"n={n} exceeds the enumeration cap of {cap}")
    out = []
    for sizes in _partitions_desc(n, n):
        if k is not None and len(sizes) != k:
            continue
        out.append(from_block_sizes(sizes))
    out.sort(key=lambda pc: tuple(-pc[j] for j in range(1, n + 1)))
    return out


def partition_count(n: int) -> int:
    """p(n) by the standard coin-change recursion (independent of the enumerator)."""
    table = [1] + [0] * n
    for part in range(1, n + 1):
        for total in range(part, n + 1):
            table[total] += table[total - part]
    return table[n]


def log_ordering_count(pc: PartitionCounts) -> float:
    """log of n! / prod_j (j!)^{m_j} m_j!."""
    out = gammaln(pc.n + 1)
    for j, m in pc.items():
        out -= m * gammaln(j + 1) + gammaln(m + 1)
    return float(out)


def ordering_count(pc: PartitionCounts) -> float:
    """Number of set partitions of {1..n} with block-size profile ``pc``.

    Exact integer arithmetic for n <= 20, log-gamma beyond.
    """
    if pc.n <= 20:
        denom = 1
        for j, m in pc.items():
            denom *= math.factorial(j) ** m * math.factorial(m)
        return float(math.factorial(pc.n) // denom)
    return math.exp(log_ordering_count(pc))
