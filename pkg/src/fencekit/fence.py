"""The fence inequality, the tiered selection algorithm and the F-B fence.

A model M is inside the fence when Qhat_M <= Qhat_ref + c * sigma_M. The
plain algorithm walks dimension tiers from the simplest upward and stops at
the first tier containing an in-fence model; the forward-backward variant
grows a model greedily until it enters the fence, then prunes removable
parameters, fitting only the models along its path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingFit, ValidationError
from .measures import FitResult, MeasureKind, fit_model, per_cluster_qhat
from .model_space import CandidateModel, Dataset, ModelSpace, is_submodel
from .sigma import (
    SigmaKind,
    sigma_chisq_approx,
    sigma_exact_f,
    sigma_observed_variance,
)


@dataclass(frozen=True)
class FenceConfig:
    """Tuning constant, width estimator and reference policy."""

    c: float
    sigma_kind: SigmaKind = SigmaKind("chisq_approx")
    reference_policy: str = "full_model"

    def __post_init__(self):
        if self.c < 0:
            raise ValidationError(f"tuning constant must be nonnegative, got {self.c}")
        if self.reference_policy not in {"full_model", "empirical_minimizer"}:
            raise ValidationError(f"unknown reference policy {self.reference_policy!r}")


@dataclass(frozen=True)
class FenceOutcome:
    """Selection plus the evidence: membership, measure values and widths."""

    selected: CandidateModel
    reference: CandidateModel
    tier_examined: int
    in_fence: dict[str, bool]
    qhat: dict[str, float]
    sigma: dict[str, float]
    c: float


def in_fence(qhat_M: float, qhat_ref: float, sigma: float, c: float) -> bool:
    """The fence inequality: Qhat_M <= Qhat_ref + c * sigma."""
    return qhat_M <= qhat_ref + c * sigma


def resolve_reference(
    space: ModelSpace, fits: dict[str, FitResult], policy: str
) -> CandidateModel:
    """Full model when the policy (and space) allows, else the Qhat minimizer."""
    if policy == "full_model":
        return space.full_model
    best = min(space.models, key=lambda m: (fits[m.id].qhat, m.id))
    return best


def sigma_table(
    space_models,
    fits: dict[str, FitResult],
    reference: CandidateModel,
    sigma_kind: SigmaKind,
    *,
    dataset: Dataset | None = None,
    measure: MeasureKind | None = None,
    reference_fit: FitResult | None = None,
) -> dict[str, float]:
    """Width estimate for every model against the given reference.

    ``exact_f_numeric`` derives (m, K) from the dataset size and the
    reference design; ``observed_variance`` recomputes the per-cluster
    decomposition of the measure at the fitted parameters.
    """
    out: dict[str, float] = {}
    ref_fit = reference_fit or fits[reference.id]
    ref_clusters = None
    if sigma_kind.tag == "observed_variance":
        if dataset is None or measure is None:
            raise ValidationError("observed variance needs the dataset and measure")
        ref_clusters = per_cluster_qhat(dataset, reference, ref_fit, measure)
    for model in space_models:
        if model.id not in fits:
            raise MissingFit(f"no fit for model {model.id!r}")
        if model.id == ref_fit.model_id:
            out[model.id] = 0.0
            continue
        if sigma_kind.tag == "chisq_approx":
            out[model.id] = sigma_chisq_approx(model, reference)
        elif sigma_kind.tag == "exact_f_numeric":
            if dataset is None:
                raise ValidationError("exact F width needs the dataset for its size m")
            K = len(reference.fixed_effects) - 1
            out[model.id] = sigma_exact_f(model, reference, dataset.n, K)
        else:
            clusters = per_cluster_qhat(dataset, model, fits[model.id], measure)
            out[model.id] = sigma_observed_variance(clusters, ref_clusters)
    return out


def fence_select(
    space: ModelSpace,
    fits: dict[str, FitResult],
    sigmas: dict[str, float],
    config: FenceConfig,
) -> FenceOutcome:
    """Tiered fence selection.

    Walks tiers d_1 < d_2 < ...; the first tier containing an in-fence model
    stops the walk and its Qhat minimizer (ties broken by lexicographically
    smallest id) is selected. The selection depends only on tiers up to the
    stopping tier; the returned membership map covers the whole space because
    membership is free arithmetic once the fits are in hand.
    """
    for m in space.models:
        if m.id not in fits:
            raise MissingFit(f"no fit for model {m.id!r}")
        if m.id not in sigmas:
            raise MissingFit(f"no sigma for model {m.id!r}")
    reference = resolve_reference(space, fits, config.reference_policy)
    ref_q = fits[reference.id].qhat

    selected = None
    tier_stop = None
    for dim in space.tiers:
        members = [
            m
            for m in space.tier(dim)
            if in_fence(fits[m.id].qhat, ref_q, sigmas[m.id], config.c)
        ]
        if members:
            selected = min(members, key=lambda m: (fits[m.id].qhat, m.id))
            tier_stop = dim
            break
    if selected is None:  # the reference is always inside, so this cannot happen
        raise ValidationError("no model inside the fence")
    membership = {
        m.id: in_fence(fits[m.id].qhat, ref_q, sigmas[m.id], config.c) for m in space.models
    }
    return FenceOutcome(
        selected=selected,
        reference=reference,
        tier_examined=tier_stop,
        in_fence=membership,
        qhat={m.id: fits[m.id].qhat for m in space.models},
        sigma=dict(sigmas),
        c=config.c,
    )


def _fb_walk(space: ModelSpace, fit_fn, sigma_fn, c: float, reference: CandidateModel):
    """Forward-backward path given caching fit/sigma callbacks.

    Returns (selected, fitted qhat map, sigma map, membership map).
    """
    qhat: dict[str, float] = {}
    sig: dict[str, float] = {}
    member: dict[str, bool] = {}
    ref_q = fit_fn(reference).qhat
    qhat[reference.id] = ref_q
    sig[reference.id] = 0.0
    member[reference.id] = True

    def check(model: CandidateModel) -> bool:
        q = fit_fn(model).qhat
        s = sigma_fn(model)
        qhat[model.id], sig[model.id] = q, s
        ok = in_fence(q, ref_q, s, c)
        member[model.id] = ok
        return ok

    def best(models) -> CandidateModel:
        scored = [(fit_fn(m).qhat, m.id, m) for m in models]
        for q, mid, m in scored:
            qhat[mid] = q
        return min(scored)[2]

    # forward: greedy growth from the simplest tier until inside the fence
    dmin = space.tiers[0]
    current = best(space.tier(dmin))
    while not check(current):
        extensions = [
            m
            for m in space.models
            if m.dimension == current.dimension + 1 and is_submodel(current, m)
        ]
        if not extensions:
            current = reference  # the full model always satisfies the inequality
            break
        current = best(extensions)

    # backward: drop removable parameters while a one-smaller submodel stays inside
    while True:
        subs = [
            m
            for m in space.models
            if m.dimension == current.dimension - 1 and is_submodel(m, current)
        ]
        inside = [m for m in subs if check(m)]
        if not inside:
            break
        current = min(inside, key=lambda m: (qhat[m.id], m.id))
    return current, qhat, sig, member


def fb_fence(
    space: ModelSpace,
    dataset: Dataset,
    measure: MeasureKind,
    sigma_kind: SigmaKind,
    c: float,
) -> FenceOutcome:
    """Forward-backward fence with the full model as reference.

    Only the models along the forward/backward path are fitted, which is the
    point of the variant when fits are expensive (the extended-GLMM measure).
    """
    reference = space.full_model
    cache: dict[str, FitResult] = {}

    def fit_fn(model: CandidateModel) -> FitResult:
        if model.id not in cache:
            cache[model.id] = fit_model(dataset, model, measure)
        return cache[model.id]

    ref_fit = fit_fn(reference)
    ref_clusters = None
    if sigma_kind.tag == "observed_variance":
        ref_clusters = per_cluster_qhat(dataset, reference, ref_fit, measure)

    def sigma_fn(model: CandidateModel) -> float:
        if model.id == reference.id:
            return 0.0
        if sigma_kind.tag == "chisq_approx":
            return sigma_chisq_approx(model, reference)
        if sigma_kind.tag == "exact_f_numeric":
            K = len(reference.fixed_effects) - 1
            return sigma_exact_f(model, reference, dataset.n, K)
        clusters = per_cluster_qhat(dataset, model, fit_fn(model), measure)
        return sigma_observed_variance(clusters, ref_clusters)

    selected, qhat, sig, member = _fb_walk(space, fit_fn, sigma_fn, c, reference)
    return FenceOutcome(
        selected=selected,
        reference=reference,
        tier_examined=selected.dimension,
        in_fence=member,
        qhat=qhat,
        sigma=sig,
        c=c,
    )
