"""Sampling formula, EPPF and the Poisson-mixture representation for PD_alpha^(r).

All three evaluate a one-dimensional integral over lambda in (0, inf) with
the log-scale engine in :mod:`nbdiversity.special`; products are taken as
sums of logs so the quolls-sized samples (n ~ 70) never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .partitions import ENUMERATION_CAP, PartitionCounts, PartitionError, enumerate_partitions
from .special import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    integrate_improper,
    log_ascending_factorial,
    log_psi_kernel,
    log_regularized_incomplete_gamma,
)

__all__ = [
    "Params",
    "esf_probability",
    "log_esf_integrand",
    "eppf",
    "esf_conditional_on_k",
    "conditional_expected_counts",
    "esf_distribution",
    "poisson_mixture_probability",
    "poisson_rate",
    "poisson_rate_total",
    "poisson_rate_limit",
]


@dataclass(frozen=True)
class Params:
    """Model parameters: stable index ``alpha`` in (0, 1) and overdispersion ``r`` > 0."""

    alpha: float
    r: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.r > 0.0:
            raise ValueError(f"r must be positive, got {self.r}")


def _center(n):
    # the lambda-integrand peaks at lambda of order n
    return math.log(max(n, 1))


def log_esf_integrand(params: Params, pc: PartitionCounts, lam):
    """log of lam^{alpha k - 1} Psi(lam)^{-(r+k)} prod_j G_{j-alpha}(lam)^{m_j}."""
    a, r, k = params.alpha, params.r, pc.k
    lam = np.asarray(lam, dtype=float)
    out = (a * k - 1.0) * np.log(lam) - (r + k) * log_psi_kernel(a, lam)
    for j, m in pc.items():
        out = out + m * log_regularized_incomplete_gamma(j - a, lam)
    return out


def _log_esf_prefactor(params: Params, pc: PartitionCounts) -> float:
    a, k = params.alpha, pc.k
    out = math.log(pc.n) + k * math.log(a) + log_ascending_factorial(params.r, k)
    for j, m in pc.items():
        out += -gammaln(m + 1) + m * (gammaln(j - a) - gammaln(j + 1))
    return float(out)


def esf_probability(params: Params, pc: PartitionCounts, spec: QuadratureSpec | None = None) -> float:
    """P(M = m) for a sample of size ``pc.n`` under PD_alpha^(r).

    The constant carries a factor ``n`` relative to the textbook display of
    the formula; with it the law sums to one over the partitions of ``n``
    and equals ``ordering_count(pc) * eppf(...)``.
    """
    spec = spec or DEFAULT_QUADRATURE
    res = integrate_improper(lambda lam: log_esf_integrand(params, pc, lam), spec, log=True,
                             center=_center(pc.n))
    return math.exp(_log_esf_prefactor(params, pc)) * res.value


def eppf(params: Params, blocks: Sequence[int], spec: QuadratureSpec | None = None) -> float:
    """Exchangeable partition probability p(n_1, ..., n_k)."""
    spec = spec or DEFAULT_QUADRATURE
    blocks = [int(b) for b in blocks]
    if not blocks or min(blocks) < 1:
        raise PartitionError("block sizes must be a nonempty list of positive integers")
    a, r = params.alpha, params.r
    k, n = len(blocks), sum(blocks)
    log_pre = (k * math.log(a) + log_ascending_factorial(r, k) - gammaln(n)
               + sum(gammaln(b - a) for b in blocks))

    def log_integrand(lam):
        out = (k * a - 1.0) * np.log(lam) - (r + k) * log_psi_kernel(a, lam)
        for b in blocks:
            out = out + log_regularized_incomplete_gamma(b - a, lam)
        return out

    res = integrate_improper(log_integrand, spec, log=True, center=_center(n))
    return math.exp(log_pre) * res.value


def esf_distribution(params: Params, n: int, k: int | None = None,
                     spec: QuadratureSpec | None = None) -> list[tuple[PartitionCounts, float]]:
    """Probabilities of every partition of ``n`` (or every ``k``-block partition)."""
    return [(pc, esf_probability(params, pc, spec)) for pc in enumerate_partitions(n, k)]


def esf_conditional_on_k(params: Params, pc: PartitionCounts, spec: QuadratureSpec | None = None,
                         cap: int = ENUMERATION_CAP) -> float:
    """P(M = m | K = k), normalised over the enumerated k-block partitions of n."""
    if pc.n > cap:
        raise PartitionError(f"n={pc.n} exceeds the enumeration cap of {cap}")
    dist = esf_distribution(params, pc.n, pc.k, spec)
    total = math.fsum(p for _, p in dist)
    target = next(p for q, p in dist if q == pc)
    return target / total


def conditional_expected_counts(params: Params, n: int, k: int, spec: QuadratureSpec | None = None,
                                cap: int = ENUMERATION_CAP) -> np.ndarray:
    """E[M_j | K = k] for j = 1..n under the exact law, by enumeration."""
    if n > cap:
        raise PartitionError(f"n={n} exceeds the enumeration cap of {cap}")
    dist = esf_distribution(params, n, k, spec)
    total = math.fsum(p for _, p in dist)
    return sum(p * pc.dense(n) for pc, p in dist) / total


# --- Poisson-mixture representation -------------------------------------
# This path deliberately avoids scipy's incomplete gamma; it uses a
# series / continued-fraction evaluation so it can act as an oracle.

def _log_inc_gamma_own(s: float, x):
    """log P(s, x) by power series (x < s + 1) or Lentz continued fraction."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    lg = math.lgamma(s)
    ser = x < s + 1.0
    if np.any(ser):
        xs = x[ser]
        term = np.full_like(xs, 1.0 / s)
        total = term.copy()
        for i in range(1, 400):
            term = term * xs / (s + i)
            total = total + term
            if np.all(term <= total * 1e-17):
                break
        with np.errstate(divide="ignore"):
            out[ser] = -xs + s * np.log(xs) - lg + np.log(total)
    cf = ~ser
    if np.any(cf):
        xs = x[cf]
        tiny = 1e-300
        b = xs + 1.0 - s
        c = np.full_like(xs, 1.0 / tiny)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, 400):
            an = -i * (i - s)
            b = b + 2.0
            d = an * d + b
            d = np.where(np.abs(d) < tiny, tiny, d)
            c = b + an / c
            c = np.where(np.abs(c) < tiny, tiny, c)
            d = 1.0 / d
            delta = d * c
            h = h * delta
            if np.all(np.abs(delta - 1.0) <= 1e-15):
                break
        with np.errstate(over="ignore", under="ignore"):
            log_q = -xs + s * np.log(xs) - lg + np.log(h)
            out[cf] = np.log1p(-np.exp(log_q))
    return out


def poisson_rate(alpha: float, j: int, lam):
    """F_j(lam) = (alpha / j!) int_0^lam x^{j-alpha-1} e^{-x} dx."""
    return np.exp(math.log(alpha) + math.lgamma(j - alpha) - math.lgamma(j + 1)
                  + _log_inc_gamma_own(j - alpha, lam))


def poisson_rate_total(alpha: float, n: int, lam):
    """T_n(lam) = F_1(lam) + ... + F_n(lam)."""
    return sum(poisson_rate(alpha, j, lam) for j in range(1, n + 1))


def poisson_rate_limit(alpha: float, lam: float) -> float:
    """T(lam) = alpha int_0^lam x^{-alpha-1} (1 - e^{-x}) dx by direct quadrature."""
    from scipy import integrate

    def smooth(x):
        return 1.0 if x == 0 else -math.expm1(-x) / x

    val, _ = integrate.quad(smooth, 0.0, lam, weight="alg", wvar=(-alpha, 0.0),
                            epsabs=1e-15, epsrel=1e-14, limit=400)
    return alpha * val


def poisson_mixture_probability(params: Params, pc: PartitionCounts,
                                spec: QuadratureSpec | None = None) -> float:
    """P(M = m) as a lambda-mixture of independent Poisson(F_j(lam)) counts."""
    spec = spec or DEFAULT_QUADRATURE
    a, r, n, k = params.alpha, params.r, pc.n, pc.k
    log_rk = log_ascending_factorial(r, k)

    def log_integrand(lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        # Psi from its closed form, evaluated with the in-house incomplete gamma
        with np.errstate(divide="ignore"):
            second = a * np.log(lam) + math.lgamma(1.0 - a) + _log_inc_gamma_own(1.0 - a, lam)
        log_psi = np.logaddexp(-lam, second)
        out = log_rk + (k * a - 1.0) * np.log(lam) - (r + k) * log_psi
        t_n = np.zeros_like(lam)
        for j in range(1, n + 1):
            f_j = poisson_rate(a, j, lam)
            t_n = t_n + f_j
            m = pc[j]
            out = out - f_j - math.lgamma(m + 1)
            if m:
                with np.errstate(divide="ignore"):
                    out = out + m * np.log(f_j)
        return out + t_n

    res = integrate_improper(log_integrand, spec, log=True, center=_center(n))
    return n * res.value

