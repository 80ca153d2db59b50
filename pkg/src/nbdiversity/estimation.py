"""Simulation-based weighted least squares fitting of (alpha, r).

The expected multiplicities E_j(alpha, r) are Monte Carlo averages of
conditioned partition draws (:class:`~nbdiversity.sampling.AttemptStream`).
Because E depends only on (n, k, alpha, r) and the seed, the whole grid is
tabulated once (:func:`expected_table`) and every fit, including the
replicate refits that produce standard errors, is an argmin over that table.

Seeding stages (first element of every substream key):

* 0 - the E table,
* 1 - replicate datasets drawn at the fitted point,
* 2 - population weights in :func:`simulation_study`,
* 3 - resampled datasets within a population,
* 4 - fresh replicate tables (``replicate_mode="fresh"``).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .esf import Params
from .partitions import PartitionCounts
from .sampling import (
    AttemptStream,
    ConditioningError,
    SamplerConfig,
    counts_to_multiplicities,
    draw_block_counts_conditioned,
    population_probabilities,
    substream,
    trim_offset,
)

log = logging.getLogger(__name__)

__all__ = [
    "GridSpec",
    "WeightScheme",
    "ExpectedCounts",
    "ExpectedTable",
    "FitResult",
    "expected_counts",
    "expected_table",
    "weighted_ss",
    "fit_grid",
    "fit_pd_alpha_baseline",
    "simulation_study",
    "normality_summary",
    "StudyCell",
]


def _default_alphas():
    return [round(0.05 * i, 2) for i in range(1, 20)]


def _default_rs():
    return [round(0.1 * i, 1) for i in range(1, 101)]


@dataclass(frozen=True)
class GridSpec:
    alpha_values: tuple = field(default_factory=lambda: tuple(_default_alphas()))
    r_values: tuple = field(default_factory=lambda: tuple(_default_rs()))
    replicates_L: int = 1000

    def __post_init__(self):
        a = tuple(float(x) for x in self.alpha_values)
        r = tuple(float(x) for x in self.r_values)
        object.__setattr__(self, "alpha_values", a)
        object.__setattr__(self, "r_values", r)
        if not a or not r:
            raise ValueError("grid lists must be nonempty")
        if any(y <= x for x, y in zip(a, a[1:])) or any(y <= x for x, y in zip(r, r[1:])):
            raise ValueError("grid lists must be strictly increasing")
        if a[0] <= 0 or a[-1] >= 1:
            raise ValueError("alpha grid values must lie in (0, 1)")
        if r[0] <= 0:
            raise ValueError("r grid values must be positive")
        if self.replicates_L < 1:
            raise ValueError("replicates_L must be positive")

    def to_dict(self):
        return {"alpha_values": list(self.alpha_values), "r_values": list(self.r_values),
                "replicates_L": self.replicates_L}


@dataclass(frozen=True)
class WeightScheme:
    kind: str = "proportional_to_j"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("proportional_to_j", "unit"):
            raise ValueError(f"unknown weight scheme {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("weights must be strictly positive")

    def weights(self, n: int) -> np.ndarray:
        j = np.arange(1, n + 1, dtype=float)
        w = j if self.kind == "proportional_to_j" else np.ones(n)
        return self.scale * w


@dataclass(frozen=True)
class ExpectedCounts:
    E: np.ndarray
    L: int = 0

    @property
    def n(self):
        return self.E.size


def weighted_ss(observed, expected, w: WeightScheme | np.ndarray | None = None) -> float:
    """S = sum_j w_j (m_j - E_j)^2."""
    E = expected.E if isinstance(expected, ExpectedCounts) else np.asarray(expected, dtype=float)
    m = observed.dense(E.size) if isinstance(observed, PartitionCounts) else np.asarray(observed, dtype=float)
    if m.shape != E.shape:
        raise ValueError(f"dimension mismatch: observed has {m.size} entries, expected {E.size}")
    if w is None:
        w = WeightScheme()
    wv = w.weights(E.size) if isinstance(w, WeightScheme) else np.asarray(w, dtype=float)
    if wv.shape != E.shape:
        raise ValueError("weight vector has the wrong length")
    return float(np.sum(wv * (m - E) ** 2))


def _param_key(alpha, r):
    return (int(round(alpha * 1e9)), int(round((r or 0.0) * 1e9)))


def _stream(cfg: SamplerConfig, stage: int, n: int, k: int, max_offset: int, alpha=None, r=None, extra=()):
    key = (stage,) + tuple(extra)
    if not cfg.common_random_numbers:
        key = key + _param_key(alpha, r)
    return AttemptStream(cfg.seed, key, n, k, max_offset=max_offset,
                         chunk_size=min(cfg.chunk_size, 2048))


def _max_offset(cfg, rs):
    return trim_offset(max(rs)) if cfg.trim == "round" else 0


def expected_counts(params: Params, n: int, k: int, cfg: SamplerConfig | None = None,
                    L: int = 1000, stage: int = 0) -> ExpectedCounts:
    """Average multiplicity vector of L conditioned draws at ``params``."""
    cfg = cfg or SamplerConfig()
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    cfg.check_truncation(k, params.r)
    if k == 1 or k == n:
        E = np.zeros(n)
        E[n - 1 if k == 1 else 0] = float(n if k == n else 1)
        return ExpectedCounts(E, L)
    stream = _stream(cfg, stage, n, k, _max_offset(cfg, [params.r]), params.alpha, params.r)
    counts = stream.conditioned(params.alpha, params.r, L, cfg.trim, cfg.max_attempts)
    return ExpectedCounts(counts_to_multiplicities(counts, n).mean(axis=0), L)


@dataclass
class ExpectedTable:
    """E vectors for every grid point, in alpha-major / r-minor order."""

    alphas: np.ndarray
    rs: np.ndarray
    E: np.ndarray           # (points, n); rows of failed points are NaN
    failed: list            # [(alpha, r, message)]
    n: int
    k: int
    trim: str

    @property
    def valid(self):
        return ~np.isnan(self.E[:, 0])

    def point(self, idx):
        return float(self.alphas[idx]), float(self.rs[idx])


def expected_table(n: int, k: int, alpha_values, r_values, cfg: SamplerConfig, L: int,
                   stage: int = 0, extra_key=()) -> ExpectedTable:
    """Tabulate E over the grid. ``r_values=None`` means the untrimmed sampler."""
    trim = "none" if r_values is None else cfg.trim
    rs_list = [1.0] if r_values is None else list(r_values)
    if trim != "none":
        cfg.check_truncation(k, max(rs_list))
    alphas = np.repeat(np.asarray(alpha_values, dtype=float), len(rs_list))
    rs = np.tile(np.asarray(rs_list, dtype=float), len(alpha_values))
    if r_values is None:
        rs[:] = np.nan
    E = np.full((alphas.size, n), np.nan)
    failed = []
    shared = None
    if cfg.common_random_numbers:
        shared = _stream(cfg, stage, n, k, _max_offset(cfg, rs_list), extra=extra_key)
    # r-outer order lets the shared stream reuse its Gamma(r) shifts
    order = np.lexsort((alphas, np.nan_to_num(rs)))
    for idx in order:
        a, r = alphas[idx], rs[idx]
        r_arg = None if r_values is None else float(r)
        if k == 1 or k == n:
            E[idx] = 0.0
            E[idx, n - 1 if k == 1 else 0] = float(n if k == n else 1)
            continue
        stream = shared or _stream(cfg, stage, n, k, _max_offset(cfg, rs_list), a, r_arg, extra_key)
        try:
            counts = stream.conditioned(float(a), r_arg if r_arg is not None else 1.0, L, trim,
                                        cfg.max_attempts)
        except ConditioningError as exc:
            failed.append((float(a), r_arg, str(exc)))
            log.info("grid point excluded: %s", exc)
            continue
        E[idx] = counts_to_multiplicities(counts, n).mean(axis=0)
    return ExpectedTable(alphas, rs, E, failed, n, k, trim)


def _objectives(table: ExpectedTable, m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """S at every grid point for a single observed vector (inf where excluded)."""
    S = np.sum(w[None, :] * (m[None, :] - table.E) ** 2, axis=1)
    return np.where(table.valid, S, np.inf)


def _batch_argmin(table: ExpectedTable, M: np.ndarray, w: np.ndarray, block: int = 256) -> np.ndarray:
    """Grid argmin for each row of M (first index wins on ties)."""
    valid = table.valid
    E = table.E[valid]
    wE = E * w
    const = np.sum(wE * E, axis=1)
    pos = np.flatnonzero(valid)
    out = np.empty(M.shape[0], dtype=np.int64)
    for start in range(0, M.shape[0], block):
        Mb = M[start:start + block]
        S = np.sum(w * Mb * Mb, axis=1)[:, None] - 2.0 * Mb @ wE.T + const[None, :]
        out[start:start + block] = pos[np.argmin(S, axis=1)]
    return out


def _is_flat(S: np.ndarray) -> bool:
    finite = S[np.isfinite(S)]
    return finite.size > 0 and np.ptp(finite) <= 1e-12 * max(1.0, abs(finite).max())


@dataclass
class FitResult:
    alpha_hat: float
    r_hat: float | None
    se_alpha: float
    se_r: float | None
    objective: float
    replicate_estimates: list
    grid: GridSpec
    seed: int
    objectives: np.ndarray = None
    grid_points: list = None
    excluded: list = None
    warnings: list = None
    identifiable: bool = True
    wall_clock_s: float = 0.0
    config: dict = None

    def to_dict(self):
        return {
            "alpha_hat": self.alpha_hat,
            "r_hat": self.r_hat,
            "se_alpha": self.se_alpha,
            "se_r": self.se_r,
            "objective": self.objective,
            "identifiable": self.identifiable,
            "replicate_estimates": [list(p) for p in self.replicate_estimates],
            "grid": self.grid.to_dict(),
            "per_point_objectives": [
                {"alpha": a, "r": r, "S": (None if not np.isfinite(s) else float(s))}
                for (a, r), s in zip(self.grid_points, self.objectives)
            ],
            "excluded_points": [{"alpha": a, "r": r, "reason": msg} for a, r, msg in self.excluded],
            "warnings": list(self.warnings),
            "seed": self.seed,
            "wall_clock_s": self.wall_clock_s,
            "config": self.config,
        }


def _sd(x):
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def _replicate_datasets(alpha, r, n, k, cfg, L, trim, stage=1):
    # simulate L datasets from the fitted model; disjoint substream from the table
    stream = AttemptStream(cfg.seed, (stage,), n, k, max_offset=trim_offset(r) if trim == "round" else 0,
                           chunk_size=min(cfg.chunk_size, 2048))
    counts = stream.conditioned(alpha, r if r is not None else 1.0, L, trim, cfg.max_attempts)
    return counts_to_multiplicities(counts, n)


def _fit(observed: PartitionCounts, alpha_values, r_values, grid: GridSpec, w: WeightScheme,
         cfg: SamplerConfig, replicate_mode: str) -> FitResult:
    t0 = time.perf_counter()
    if replicate_mode not in ("shared", "fresh"):
        raise ValueError("replicate_mode must be 'shared' or 'fresh'")
    n, k, L = observed.n, observed.k, grid.replicates_L
    wv = w.weights(n)
    table = expected_table(n, k, alpha_values, r_values, cfg, L)
    S = _objectives(table, observed.dense(n), wv)
    if not np.isfinite(S).any():
        raise ConditioningError("every grid point failed to reproduce the observed number of blocks")
    best = int(np.argmin(S))
    a_hat, r_hat = table.point(best)
    r_hat = None if r_values is None else r_hat
    warnings = []
    identifiable = not _is_flat(S)
    if not identifiable:
        warnings.append("objective is constant over the grid; parameters are not identifiable")
    if r_values is not None and r_hat == max(r_values) and len(r_values) > 1:
        warnings.append(f"r_hat at the upper grid boundary {r_hat}")
    if a_hat in (min(alpha_values), max(alpha_values)) and len(alpha_values) > 1:
        warnings.append(f"alpha_hat at the grid boundary {a_hat}")

    trim = table.trim
    M = _replicate_datasets(a_hat, r_hat, n, k, cfg, L, trim)
    if replicate_mode == "shared":
        idx = _batch_argmin(table, M, wv)
    else:
        idx = np.empty(L, dtype=np.int64)
        for ell in range(L):
            fresh = expected_table(n, k, alpha_values, r_values, cfg, L, stage=4, extra_key=(ell,))
            idx[ell] = int(np.argmin(_objectives(fresh, M[ell], wv)))
    reps = [table.point(i) for i in idx]
    if r_values is None:
        reps = [(a, None) for a, _ in reps]
    se_a = _sd([a for a, _ in reps])
    se_r = None if r_values is None else _sd([r for _, r in reps])
    points = [(float(a), None if r_values is None else float(r)) for a, r in zip(table.alphas, table.rs)]
    return FitResult(
        alpha_hat=a_hat, r_hat=r_hat, se_alpha=se_a, se_r=se_r, objective=float(S[best]),
        replicate_estimates=reps, grid=grid, seed=cfg.seed, objectives=S, grid_points=points,
        excluded=table.failed, warnings=warnings, identifiable=identifiable,
        wall_clock_s=time.perf_counter() - t0,
        config={"truncation_J": cfg.truncation_J, "trim": trim, "max_attempts": cfg.max_attempts,
                "common_random_numbers": cfg.common_random_numbers, "weights": w.kind,
                "replicate_mode": replicate_mode, "n": n, "k": k},
    )


def fit_grid(observed: PartitionCounts, grid: GridSpec | None = None, w: WeightScheme | None = None,
             cfg: SamplerConfig | None = None, replicate_mode: str = "shared") -> FitResult:
    """Grid-search WLS estimate of (alpha, r) with resampling standard errors.

    ``replicate_mode="shared"`` refits each replicate dataset against the
    same E table as the main fit; ``"fresh"`` re-simulates the table for every
    replicate (L times the cost).
    """
    grid = grid or GridSpec()
    return _fit(observed, grid.alpha_values, grid.r_values, grid, w or WeightScheme(),
                cfg or SamplerConfig(), replicate_mode)


def fit_pd_alpha_baseline(observed: PartitionCounts, grid: GridSpec | None = None,
                          w: WeightScheme | None = None, cfg: SamplerConfig | None = None,
                          replicate_mode: str = "shared") -> FitResult:
    """Same pipeline with the untrimmed PD_alpha sampler; grid over alpha only."""
    grid = grid or GridSpec()
    return _fit(observed, grid.alpha_values, None, grid, w or WeightScheme(),
                cfg or SamplerConfig(), replicate_mode)


def normality_summary(values) -> dict:
    """Skewness and excess kurtosis of replicate estimates."""
    x = np.asarray(values, dtype=float)
    if x.size < 3 or np.ptp(x) == 0:
        return {"n": int(x.size), "mean": float(x.mean()) if x.size else None, "sd": _sd(x),
                "skewness": None, "abs_skewness": None, "excess_kurtosis": None}
    skew = float(stats.skew(x))
    return {"n": int(x.size), "mean": float(x.mean()), "sd": _sd(x), "skewness": skew,
            "abs_skewness": abs(skew), "excess_kurtosis": float(stats.kurtosis(x))}


@dataclass
class StudyCell:
    k: int
    n: int
    mean_alpha: float | None
    se_r_alpha: float | None
    se_p_alpha: float | None
    mean_r: float | None
    se_r_r: float | None
    se_p_r: float | None
    identifiable: bool
    populations: int
    failures: list
    population_means: list

    def to_dict(self):
        return dict(self.__dict__)


def simulation_study(true_params: Params, k: int, n: int, L: int = 1000, Q: int = 1, N_pop: int = 100,
                     grid: GridSpec | None = None, seed: int = 0, cfg: SamplerConfig | None = None,
                     w: WeightScheme | None = None) -> StudyCell:
    """Two-level (population / resampling) simulation of the estimator.

    For each of ``N_pop`` populations a weight vector is drawn at the true
    parameters; ``Q`` rounds of ``L`` datasets are drawn from it (all k blocks
    occupied) and each dataset is fitted against the model's E table.

    SE_R is the mean over populations of the within-population SD of the
    estimates; SE_P is the SD of all estimates pooled across populations.
    """
    grid = grid or GridSpec(replicates_L=L)
    cfg = cfg or SamplerConfig(seed=seed)
    if cfg.seed != seed:
        cfg = SamplerConfig(truncation_J=cfg.truncation_J, seed=seed, trim=cfg.trim,
                            max_attempts=cfg.max_attempts,
                            common_random_numbers=cfg.common_random_numbers, chunk_size=cfg.chunk_size)
    w = w or WeightScheme()
    wv = w.weights(n)
    cfg.check_truncation(k, true_params.r)
    table = expected_table(n, k, grid.alpha_values, grid.r_values, cfg, grid.replicates_L)
    flat = k == 1 or k == n or table.valid.sum() <= 1
    if not flat:
        E_valid = table.E[table.valid]
        flat = np.ptp(E_valid, axis=0).max() <= 1e-12
    failures = [f"grid point alpha={a}, r={r}: {msg}" for a, r, msg in table.failed]
    if flat:
        return StudyCell(k, n, None, None, None, None, None, None, False, 0,
                         failures + ["objective constant in (alpha, r): not identifiable"], [])
    means, sds_a, sds_r, all_a, all_r = [], [], [], [], []
    for pop in range(N_pop):
        rng = substream(seed, 2, pop)
        p = population_probabilities(true_params.alpha, true_params.r, k, rng, cfg)
        est_a, est_r = [], []
        try:
            for q in range(Q):
                counts = draw_block_counts_conditioned(p, n, L, substream(seed, 3, pop, q), cfg.max_attempts)
                idx = _batch_argmin(table, counts_to_multiplicities(counts, n), wv)
                est_a.extend(table.alphas[idx])
                est_r.extend(table.rs[idx])
        except ConditioningError as exc:
            failures.append(f"population {pop}: {exc}")
            log.info("population %d skipped: %s", pop, exc)
            continue
        means.append((float(np.mean(est_a)), float(np.mean(est_r))))
        sds_a.append(_sd(est_a))
        sds_r.append(_sd(est_r))
        all_a.extend(est_a)
        all_r.extend(est_r)
    if not means:
        return StudyCell(k, n, None, None, None, None, None, None, True, 0, failures, [])
    return StudyCell(
        k=k, n=n,
        mean_alpha=float(np.mean(all_a)), se_r_alpha=float(np.mean(sds_a)), se_p_alpha=_sd(all_a),
        mean_r=float(np.mean(all_r)), se_r_r=float(np.mean(sds_r)), se_p_r=_sd(all_r),
        identifiable=True, populations=len(means), failures=failures, population_means=means,
    )
