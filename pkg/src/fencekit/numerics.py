"""Deterministic numerical substrate.

Seedable counter-based RNG streams, full-rank least squares, Gauss-Hermite
quadrature against the standard normal density, and the standard deviation of
the log-F deviance gap used by the exact fence width.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from .errors import (
    DegreesOfFreedomTooSmall,
    DimensionMismatch,
    OrderOutOfRange,
    RankDeficient,
)

_RANK_RTOL = 1e-10


def _purpose_key(purpose: str) -> int:
    # Stable across runs and platforms (unlike hash()).
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of a random stream.

    Identical (master_seed, stream_id, purpose) triples reproduce identical
    draw sequences; distinct triples give statistically independent streams.
    The underlying generator is counter-based (Philox), so replicate and
    bootstrap streams can be derived without shared mutable state.
    """

    master_seed: int
    stream_id: int = 0
    purpose: str = ""

    def substream(self, stream_id: int | None = None, purpose: str | None = None) -> "RngStream":
        """Derive a child descriptor; unspecified fields are inherited."""
        return RngStream(
            master_seed=self.master_seed,
            stream_id=self.stream_id if stream_id is None else int(stream_id),
            purpose=self.purpose if purpose is None else purpose,
        )

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.stream_id & 0xFFFFFFFFFFFFFFFF, _purpose_key(self.purpose)),
        )
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights normalized for E[f(Z)], Z ~ N(0, 1)."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def expectation(self, f) -> float:
        """Approximate E[f(Z)] for a vectorized callable f."""
        return float(np.dot(self.weights, f(self.nodes)))


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Quadrature rule exact for polynomials of degree <= 2*order - 1.

    Weights are normalized to sum to one, so dot(weights, f(nodes))
    approximates the expectation of f under the standard normal law.
    """
    if not 1 <= order <= 100:
        raise OrderOutOfRange(f"quadrature order must be in [1, 100], got {order}")
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / weights.sum()
    return QuadratureRule(order=order, nodes=nodes, weights=weights)


def solve_least_squares(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimize |y - Xb|^2 over b for a full-column-rank design.

    Returns (coefficients, residual sum of squares). Uses an orthogonal
    (SVD-based) solve rather than normal equations: the residuals feed
    logarithms downstream and must stay accurate near zero.

    Raises RankDeficient when the smallest singular value falls below
    1e-10 times the largest, DimensionMismatch on incompatible shapes.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-d, got shape {X.shape}")
    n, q = X.shape
    if y.shape[0] != n:
        raise DimensionMismatch(f"len(y)={y.shape[0]} does not match X rows {n}")
    if q < 1 or n < q:
        raise DimensionMismatch(f"need n >= q >= 1, got n={n}, q={q}")
    coef, _, rank, svals = np.linalg.lstsq(X, y, rcond=None)
    if rank < q or svals[-1] <= _RANK_RTOL * svals[0]:
        raise RankDeficient(
            f"design is numerically rank deficient (singular values {svals[0]:.3e}..{svals[-1]:.3e})"
        )
    resid = y - X @ coef
    return coef, float(resid @ resid)


def _log_gap_moments(m: int, d1: int, d2: int) -> tuple[float, float]:
    """Mean and variance of (m/2)*log(1 + (d1/d2) F) with F ~ F(d1, d2).

    Substituting u = d1*F/(d1*F + d2) ~ Beta(d1/2, d2/2) turns the transform
    into -(m/2)*log(1 - u), so the integrals run over the finite interval
    (0, 1) where adaptive quadrature is comfortable despite the heavy F tail.
    """
    a, b = d1 / 2.0, d2 / 2.0
    beta_pdf = stats.beta(a, b).pdf

    def mean_integrand(u):
        return -np.log1p(-u) * beta_pdf(u)

    def second_integrand(u):
        return np.log1p(-u) ** 2 * beta_pdf(u)

    opts = dict(epsabs=1e-12, epsrel=1e-11, limit=200)
    m1, _ = integrate.quad(mean_integrand, 0.0, 1.0, **opts)
    m2, _ = integrate.quad(second_integrand, 0.0, 1.0, **opts)
    half_m = m / 2.0
    mean = half_m * m1
    var = half_m**2 * max(m2 - m1**2, 0.0)
    return mean, var


@lru_cache(maxsize=4096)
def f_distribution_mean_of_gap(m: int, K: int, p: int) -> float:
    """Expected value of (m/2)*log(1 + ((K-p)/(m-K-1)) F(K-p, m-K-1)).

    The exactly known expectation of the deviance gap of a true candidate,
    used as the natural scale of the screen tests for the area-level measure.
    """
    d1 = K - p
    d2 = m - K - 1
    if d1 < 0:
        raise DegreesOfFreedomTooSmall(f"need K - p >= 0, got K={K}, p={p}")
    if d2 < 3:
        raise DegreesOfFreedomTooSmall(f"need m - K - 1 >= 3, got m={m}, K={K}")
    if d1 == 0:
        return 0.0
    mean, _ = _log_gap_moments(m, d1, d2)
    return float(mean)


@lru_cache(maxsize=4096)
def f_distribution_sd_of_gap(m: int, K: int, p: int) -> float:
    """Standard deviation of (m/2)*log(1 + ((K-p)/(m-K-1)) F(K-p, m-K-1)).

    This is the exact finite-sample law of the deviance gap between a true
    candidate and the reference under the unit-variance area-level model;
    K - p = 0 means the candidate is the reference itself and the gap is
    identically zero. Cached: the value depends only on the three integers
    and is re-requested for every model of every bootstrap replicate.
    """
    d1 = K - p
    d2 = m - K - 1
    if d1 < 0:
        raise DegreesOfFreedomTooSmall(f"need K - p >= 0, got K={K}, p={p}")
    if d2 < 3:
        raise DegreesOfFreedomTooSmall(f"need m - K - 1 >= 3, got m={m}, K={K}")
    if d1 == 0:
        return 0.0
    _, var = _log_gap_moments(m, d1, d2)
    return float(np.sqrt(var))
