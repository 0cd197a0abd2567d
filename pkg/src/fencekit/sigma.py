"""Estimators of sd(Qhat_M - Qhat_ref), the fence width scale.

Three constructions: the chi-square large-sample approximation, exact
numerical integration of the log-F law of the area-level deviance gap, and
the observed-variance plug-in for measures that decompose over clusters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NotFullModelReference
from .model_space import CandidateModel
from .numerics import f_distribution_sd_of_gap

VALID_SIGMA_KINDS = ("chisq_approx", "exact_f_numeric", "observed_variance")


@dataclass(frozen=True)
class SigmaKind:
    """Which width estimator to use.

    ``exact_f_numeric`` is valid only with the area-level likelihood measure;
    ``observed_variance`` needs a measure with a per-cluster decomposition.
    """

    tag: str

    def __post_init__(self):
        if self.tag not in VALID_SIGMA_KINDS:
            raise ValueError(f"unknown sigma kind {self.tag!r}")


def sigma_chisq_approx(model: CandidateModel, reference: CandidateModel) -> float:
    """sqrt((|ref| - |M|) / 2), from the asymptotic chi-square law of twice the gap."""
    d = reference.dimension - model.dimension
    if d < 0:
        raise NotFullModelReference(
            f"reference dimension {reference.dimension} below model dimension {model.dimension}"
        )
    return float(np.sqrt(d / 2.0))


def sigma_exact_f(model: CandidateModel, reference: CandidateModel, m: int, K: int) -> float:
    """Exact sd of the area-level deviance gap for a true candidate.

    Conventions follow the closed-form gap law: the reference design has
    K + 1 columns and the candidate p + 1 columns, so the gap is
    (m/2) * log(1 + ((K-p)/(m-K-1)) F(K-p, m-K-1)).
    """
    if len(reference.fixed_effects) != K + 1:
        raise NotFullModelReference(
            f"reference has {len(reference.fixed_effects)} columns, expected K + 1 = {K + 1}"
        )
    p = len(model.fixed_effects) - 1
    return f_distribution_sd_of_gap(m, K, p)


def sigma_observed_variance(
    per_cluster_q_model: np.ndarray,
    per_cluster_q_reference: np.ndarray,
    per_cluster_expectation_estimates: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Observed version of var(Q_M - Q_ref) for cluster-decomposable measures.

    sqrt(max(0, sum_i d_i^2 - sum_i E_i^2)) with d_i the per-cluster
    difference of fitted measure terms and E_i the plug-in estimate of the
    per-cluster mean difference. When the estimates are not supplied, E_i
    defaults to the cross-cluster average of the d_i (the simplest plug-in,
    which reduces the expression to a centered sum of squares). A negative
    plug-in variance is clamped to zero with a RuntimeWarning: it signals
    estimation noise, not a genuine zero.
    """
    qm = np.asarray(per_cluster_q_model, dtype=float).ravel()
    qr = np.asarray(per_cluster_q_reference, dtype=float).ravel()
    if qm.shape != qr.shape:
        raise LengthMismatch(f"per-cluster lengths differ: {qm.shape} vs {qr.shape}")
    if qm.size < 2:
        raise LengthMismatch("observed variance needs at least two clusters")
    d = qm - qr
    if per_cluster_expectation_estimates is None:
        e = np.full(d.shape, d.mean())
    else:
        em, er = per_cluster_expectation_estimates
        em = np.asarray(em, dtype=float).ravel()
        er = np.asarray(er, dtype=float).ravel()
        if em.shape != d.shape or er.shape != d.shape:
            raise LengthMismatch("expectation estimates must match the number of clusters")
        e = em - er
    var = float(d @ d - e @ e)
    if var < 0.0:
        warnings.warn(
            f"observed variance plug-in is negative ({var:.3e}); clamping to zero",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return float(np.sqrt(var))
