"""Random generation for PD_alpha^(r) partitions and negative binomial point processes.

Seeding
-------
Every random stream is derived from a user seed plus an integer key through
``numpy.random.SeedSequence(seed, spawn_key=key)`` (see :func:`substream`).
SeedSequence hashes the entropy and key with a fixed, documented mixing
function, so a given ``(seed, key)`` yields the same stream on every machine
and the result of a replicate never depends on execution order.

Trimming with non-integer r
---------------------------
For integer ``r`` the trimmed weights are ``p_j ∝ Gamma_{r+j}^{-1/alpha}``.
Writing ``Gamma_{r+j} = Gamma_r + Gamma'_j`` where ``Gamma_r ~ Gamma(r, 1)``
is independent of the unit-rate partial sums ``Gamma'_j`` extends the
construction to every real ``r > 0`` (``trim="gamma"``; the default).
``trim="round"`` reproduces the literal integer offset ``round(r)``, and
``trim="none"`` gives the untrimmed PD_alpha weights.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincinv

from .partitions import PartitionCounts

__all__ = [
    "SamplerConfig",
    "LevyMeasure",
    "PointConfiguration",
    "ConditioningError",
    "substream",
    "gamma_sequence",
    "weights_untrimmed",
    "block_probabilities",
    "trim_offset",
    "population_probabilities",
    "draw_partition",
    "draw_block_counts_conditioned",
    "counts_to_multiplicities",
    "AttemptStream",
    "nbpp_draw",
    "nbpp_counts",
]

TRIM_MODES = ("gamma", "round", "none")


class ConditioningError(RuntimeError):
    """No draw reproduced all k blocks within the attempt cap."""


@dataclass(frozen=True)
class SamplerConfig:
    truncation_J: int = 1000
    seed: int = 0
    base_distribution: str = "standard_normal"
    trim: str = "gamma"
    max_attempts: int = 10_000
    common_random_numbers: bool = True
    chunk_size: int = 8192

    def __post_init__(self):
        if self.truncation_J < 1:
            raise ValueError("truncation_J must be positive")
        if self.trim not in TRIM_MODES:
            raise ValueError(f"trim must be one of {TRIM_MODES}, got {self.trim!r}")
        if self.base_distribution != "standard_normal":
            raise ValueError("only the standard_normal base distribution is supported")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")

    def check_truncation(self, k: int, r: float):
        if self.truncation_J < k + math.ceil(r) + 1:
            raise ValueError(f"truncation_J={self.truncation_J} too small for k={k}, r={r}")


@dataclass(frozen=True)
class LevyMeasure:
    """alpha x^{-alpha-1} dx restricted to (0, 1]."""

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    def mass(self, a: float, b: float) -> float:
        """Lambda((a, b]) = a^{-alpha} - b^{-alpha} for 0 < a <= b <= 1."""
        if not 0 < a <= b <= 1:
            raise ValueError(f"need 0 < a <= b <= 1, got ({a}, {b}]")
        return a ** -self.alpha - b ** -self.alpha


@dataclass(frozen=True)
class PointConfiguration:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size and (pts.min() <= 0 or pts.max() > 1):
            raise ValueError("points must lie in (0, 1]")
        object.__setattr__(self, "points", pts)

    def count(self, a: float, b: float) -> int:
        return int(np.count_nonzero((self.points > a) & (self.points <= b)))

    def __len__(self):
        return self.points.size


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(int(x) for x in key))))


def gamma_sequence(count: int, rng: np.random.Generator) -> np.ndarray:
    """Partial sums Gamma_1 < Gamma_2 < ... of unit exponentials."""
    if count < 1:
        raise ValueError("count must be positive")
    return np.cumsum(rng.standard_exponential(count))


def weights_untrimmed(alpha: float, J: int, rng: np.random.Generator | None = None,
                      gammas: np.ndarray | None = None) -> np.ndarray:
    """Normalised weights Gamma_j^{-1/alpha} / sum_l Gamma_l^{-1/alpha}, j <= J.

    ``gammas`` overrides the random partial sums (used to check scale
    invariance).
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if gammas is None:
        gammas = gamma_sequence(J, rng)
    logw = -np.log(np.asarray(gammas, dtype=float)) / alpha
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def block_probabilities(p_tilde, r_offset: int, k: int) -> np.ndarray:
    """Renormalise entries r_offset+1 .. r_offset+k of ``p_tilde``."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    if r_offset < 0 or k < 1:
        raise ValueError("need r_offset >= 0 and k >= 1")
    if r_offset + k > p_tilde.size:
        raise IndexError(f"r_offset + k = {r_offset + k} exceeds the {p_tilde.size} available weights")
    block = p_tilde[r_offset:r_offset + k]
    return block / block.sum()


def trim_offset(r: float) -> int:
    """Integer offset used by ``trim="round"`` (halves round up)."""
    return int(math.floor(r + 0.5))


def _log_weights(alpha, r, trim, partial_sums, gamma_uniform, k, shift=None):
    """Unnormalised log weights of the k retained atoms, rows are draws."""
    if trim == "gamma":
        if shift is None:
            shift = gammaincinv(r, gamma_uniform)
        g = shift[:, None] + partial_sums[:, :k]
    elif trim == "round":
        off = trim_offset(r)
        g = partial_sums[:, off:off + k]
    else:
        g = partial_sums[:, :k]
    return -np.log(g) / alpha


def _softmax_rows(logw):
    logw = logw - logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def population_probabilities(alpha: float, r: float | None, k: int, rng: np.random.Generator,
                             cfg: SamplerConfig | None = None) -> np.ndarray:
    """One draw of the k retained block probabilities (p_1 > ... > p_k).

    ``r=None`` or ``cfg.trim == "none"`` gives the untrimmed PD_alpha weights.
    """
    cfg = cfg or SamplerConfig()
    trim = "none" if r is None else cfg.trim
    if trim != "none":
        cfg.check_truncation(k, r)
    if trim == "round":
        p_tilde = weights_untrimmed(alpha, cfg.truncation_J, rng)
        return block_probabilities(p_tilde, trim_offset(r), k)
    if trim == "none":
        p_tilde = weights_untrimmed(alpha, cfg.truncation_J, rng)
        return block_probabilities(p_tilde, 0, k)
    # the J-term normalisation cancels after renormalising the k retained atoms
    partial = gamma_sequence(k, rng)[None, :]
    u = np.array([rng.random()])
    return _softmax_rows(_log_weights(alpha, r, "gamma", partial, u, k))[0]


def draw_partition(p, n: int, rng: np.random.Generator) -> PartitionCounts:
    """Allocate n items to blocks with probabilities p; empty blocks are dropped."""
    p = np.asarray(p, dtype=float)
    if p.size < 1 or n < 1:
        raise ValueError("need at least one block and n >= 1")
    counts = rng.multinomial(n, p / p.sum())
    return PartitionCounts({int(c): int(m) for c, m in zip(*np.unique(counts[counts > 0], return_counts=True))})


def counts_to_multiplicities(counts: np.ndarray, n: int) -> np.ndarray:
    """Rows of block sizes -> rows of multiplicity vectors (m_1..m_n); zeros ignored."""
    counts = np.asarray(counts, dtype=np.int64)
    rows = np.repeat(np.arange(counts.shape[0]), counts.shape[1])
    flat = counts.ravel()
    keep = flat > 0
    out = np.zeros(counts.shape[0] * n)
    np.add.at(out, rows[keep] * n + flat[keep] - 1, 1.0)
    return out.reshape(counts.shape[0], n)


def _collect(accept_chunks, L, cap, describe):
    """Pick the first L accepted attempts, enforcing at most ``cap`` attempts per replicate."""
    chosen = []
    last = -1
    offset = 0
    for accept in accept_chunks:
        idx = np.flatnonzero(accept) + offset
        size = accept.size
        if idx.size:
            gaps = np.diff(np.concatenate(([last], idx)))
            bad = np.flatnonzero(gaps > cap)
            if bad.size:
                raise ConditioningError(f"{describe}: replicate {len(chosen) + bad[0] + 1} "
                                        f"needed more than {cap} attempts")
            take = idx[:L - len(chosen)]
            chosen.extend(take.tolist())
            last = idx[-1]
            if len(chosen) >= L:
                return np.asarray(chosen[:L])
        offset += size
        if offset - 1 - last >= cap:
            raise ConditioningError(f"{describe}: replicate {len(chosen) + 1} needed more than {cap} attempts")
    raise ConditioningError(f"{describe}: attempt stream exhausted")


def draw_block_counts_conditioned(p, n: int, L: int, rng: np.random.Generator,
                                  max_attempts: int = 10_000, batch: int = 4096) -> np.ndarray:
    """L multinomial allocations from fixed p with every block occupied.

    Returns an (L, k) array of block sizes.
    """
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    stash = []

    def chunks():
        while True:
            c = rng.multinomial(n, p, size=batch)
            stash.append(c)
            yield (c > 0).all(axis=1)

    picked = _collect(chunks(), L, max_attempts, "fixed-population resampling")
    allc = np.concatenate(stash)
    return allc[picked]


class AttemptStream:
    """Deterministic stream of sampling attempts shared across grid points.

    Attempt ``t`` carries the unit-exponential partial sums, one uniform for
    the Gamma(r) shift and n sorted uniforms for allocating items. Grid points
    that read the same stream use common random numbers; chunks are rebuilt
    from their own substream on demand, so caching never changes results.
    """

    def __init__(self, seed: int, key: tuple, n: int, k: int, max_offset: int = 0,
                 chunk_size: int = 8192, cache_chunks: int = 24):
        self.seed, self.key = seed, tuple(key)
        self.n, self.k, self.width = n, k, k + max_offset
        self.chunk_size = chunk_size
        self._cache: OrderedDict[int, tuple] = OrderedDict()
        self._cache_chunks = cache_chunks
        self._shift_r = None
        self._shifts: dict[int, np.ndarray] = {}

    def chunk(self, index: int):
        hit = self._cache.get(index)
        if hit is not None:
            self._cache.move_to_end(index)
            return hit
        rng = substream(self.seed, *self.key, index)
        B, n = self.chunk_size, self.n
        partial = np.cumsum(rng.standard_exponential((B, self.width)), axis=1)
        gamma_u = rng.random(B)
        items = np.sort(rng.random((B, n)), axis=1)
        rows = np.arange(B)
        flat = (items + rows[:, None]).ravel()
        out = (partial, gamma_u, flat, rows)
        self._cache[index] = out
        if len(self._cache) > self._cache_chunks:
            self._cache.popitem(last=False)
        return out

    def block_counts(self, index, alpha, r, trim):
        """Block sizes for every attempt of one chunk, shape (B, k)."""
        partial, gamma_u, flat, rows = self.chunk(index)
        shift = None
        if trim == "gamma":
            # Gamma(r) shifts depend on r only; keep those of the latest r
            if r != self._shift_r:
                self._shift_r, self._shifts = r, {}
            shift = self._shifts.get(index)
            if shift is None:
                shift = self._shifts[index] = gammaincinv(r, gamma_u)
        p = _softmax_rows(_log_weights(alpha, r, trim, partial, gamma_u, self.k, shift))
        cum = np.cumsum(p, axis=1)
        cum[:, -1] = 1.0
        pos = np.searchsorted(flat, (cum + rows[:, None]).ravel(), side="left").reshape(cum.shape)
        pos -= rows[:, None] * self.n
        return np.diff(pos, axis=1, prepend=0)

    def conditioned(self, alpha, r, L, trim="gamma", max_attempts=10_000):
        """First L attempts in which all k blocks are occupied, as (L, k) block sizes."""
        kept = []

        def chunks():
            index = 0
            while True:
                c = self.block_counts(index, alpha, r, trim)
                kept.append(c)
                index += 1
                yield c.min(axis=1) > 0

        picked = _collect(chunks(), L, max_attempts, f"alpha={alpha:g}, r={r}")
        return np.concatenate(kept)[picked]


def nbpp_draw(measure: LevyMeasure, r: float, rng: np.random.Generator, eps: float = 1e-6) -> PointConfiguration:
    """Negative binomial point process on (eps, 1] as a Gamma(r)-mixed Poisson process."""
    if r <= 0:
        raise ValueError("r must be positive")
    a = measure.alpha
    total = measure.mass(eps, 1.0)
    g = rng.gamma(r)
    count = rng.poisson(g * total)
    u = rng.random(count)
    pts = (eps ** -a - u * total) ** (-1.0 / a)
    return PointConfiguration(np.minimum(pts, 1.0))


def nbpp_counts(measure: LevyMeasure, r: float, sets, size: int, rng: np.random.Generator) -> np.ndarray:
    """Counts of ``size`` independent NBPP realisations on disjoint intervals.

    Uses the same Cox construction as :func:`nbpp_draw` without materialising
    the points: given the Gamma factor the counts are independent Poissons.
    """
    masses = np.array([measure.mass(a, b) for a, b in sets])
    g = rng.gamma(r, size=size)
    return rng.poisson(g[:, None] * masses[None, :])
