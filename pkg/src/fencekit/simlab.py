"""Data generators and study runners for the desk-scale experiments.

Scenarios freeze their covariate design once (from a dedicated design
stream), then redraw random effects and errors per replicate. A study runs
every strategy on the identical replicate datasets and tallies
correct/underfit/overfit selections against the scenario truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .adaptive import AdaptiveConfig, adaptive_select
from .errors import FencekitError, ValidationError
from .fence import FenceConfig, fb_fence, fence_select, sigma_table
from .gic import GicConfig, gic_select
from .measures import MeasureKind, fit_table
from .model_space import (
    CandidateModel,
    Dataset,
    ModelSpace,
    classify_selection,
    enumerate_all_subsets,
)
from .numerics import RngStream
from .sigma import SigmaKind

FAMILIES = ("fay_herriot", "clustered_lmm", "two_level_logistic")


@dataclass(frozen=True)
class Scenario:
    """A frozen design plus the truth used to generate and judge replicates.

    ``sizes``: (m,) areas for the area-level family; (m, K) clusters and
    cluster size for the clustered family; (m, n_i, n_ij) communities,
    families per community and observations per family for the two-level
    logistic family. ``truth`` holds the data-generating parameters; the
    nonzero coefficients define the true model.
    """

    family: str
    sizes: tuple[int, ...]
    beta: tuple[float, ...]
    variance: dict[str, float]
    replications: int
    design_seed: int
    design: dict[str, np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}")
        for key, val in self.variance.items():
            if key == "rho":
                if not 0.0 <= val < 1.0:
                    raise ValidationError("rho must lie in [0, 1)")
            elif val < 0:
                raise ValidationError(f"variance parameter {key}={val} must be nonnegative")
        if self.design is None:
            object.__setattr__(self, "design", self._make_design())

    @property
    def n(self) -> int:
        if self.family == "fay_herriot":
            return self.sizes[0]
        if self.family == "clustered_lmm":
            return self.sizes[0] * self.sizes[1]
        m, ni, nij = self.sizes
        return m * ni * nij

    def _make_design(self) -> dict[str, np.ndarray]:
        g = RngStream(self.design_seed, purpose="design").generator()
        n = self.n
        cols = {"x1": np.ones(n)}
        for j in range(2, len(self.beta) + 1):
            cols[f"x{j}"] = g.standard_normal(n)
        return cols

    @property
    def truth_model(self) -> CandidateModel:
        active = tuple(
            f"x{j + 1}" for j, b in enumerate(self.beta) if b != 0.0
        )
        return CandidateModel(fixed_effects=active)

    def linear_predictor(self) -> np.ndarray:
        eta = np.zeros(self.n)
        for j, b in enumerate(self.beta):
            if b != 0.0:
                eta += b * self.design[f"x{j + 1}"]
        return eta


def generate_fay_herriot(scenario: Scenario, replicate_index: int, rng: RngStream) -> Dataset:
    """Area-level responses y = X beta + v + e with unit sampling variance."""
    if scenario.family != "fay_herriot":
        raise ValidationError("scenario family is not fay_herriot")
    m = scenario.sizes[0]
    g = rng.substream(stream_id=replicate_index, purpose=rng.purpose + "/fay_herriot").generator()
    A = scenario.variance["A"]
    v = g.normal(0.0, np.sqrt(A), m)
    e = g.standard_normal(m)
    return Dataset(
        y=scenario.linear_predictor() + v + e,
        candidates=scenario.design,
        sampling_variances=np.ones(m),
    )


def generate_clustered_lmm(scenario: Scenario, replicate_index: int, rng: RngStream) -> Dataset:
    """Clustered responses with a random intercept and exchangeable errors."""
    if scenario.family != "clustered_lmm":
        raise ValidationError("scenario family is not clustered_lmm")
    m, K = scenario.sizes
    if K < 2:
        raise ValidationError("clusters need at least two observations")
    g = rng.substream(stream_id=replicate_index, purpose=rng.purpose + "/clustered").generator()
    sigma = np.sqrt(scenario.variance["sigma_sq"])
    tau = np.sqrt(scenario.variance["tau_sq"])
    rho = scenario.variance.get("rho", 0.0)
    alpha = g.normal(0.0, sigma, m)
    shared = g.standard_normal(m)
    idio = g.standard_normal((m, K))
    # tau^2 {(1 - rho) I + rho J} = (tau sqrt(rho) Z_i 1)^2-part + idiosyncratic part
    eps = tau * (np.sqrt(rho) * shared[:, None] + np.sqrt(1.0 - rho) * idio)
    y = scenario.linear_predictor() + np.repeat(alpha, K) + eps.ravel()
    return Dataset(
        y=y,
        candidates=scenario.design,
        cluster=np.repeat(np.arange(m), K),
    )


def generate_two_level_logistic(
    scenario: Scenario, replicate_index: int, rng: RngStream
) -> Dataset:
    """Binary responses with nested community/family random intercepts."""
    if scenario.family != "two_level_logistic":
        raise ValidationError("scenario family is not two_level_logistic")
    m, ni, nij = scenario.sizes
    g = rng.substream(stream_id=replicate_index, purpose=rng.purpose + "/logistic").generator()
    sigma = np.sqrt(scenario.variance["sigma_sq"])
    tau = np.sqrt(scenario.variance["tau_sq"])
    u = g.normal(0.0, sigma, m)
    v = g.normal(0.0, tau, m * ni)
    community = np.repeat(np.arange(m), ni * nij)
    family = np.repeat(np.arange(m * ni), nij)
    eta = scenario.linear_predictor() + u[community] + v[family]
    p = 1.0 / (1.0 + np.exp(-eta))
    y = (g.random(scenario.n) < p).astype(float)
    return Dataset(y=y, candidates=scenario.design, community=community, family=family)


def generate(scenario: Scenario, replicate_index: int, rng: RngStream) -> Dataset:
    gen = {
        "fay_herriot": generate_fay_herriot,
        "clustered_lmm": generate_clustered_lmm,
        "two_level_logistic": generate_two_level_logistic,
    }[scenario.family]
    return gen(scenario, replicate_index, rng)


def default_measure(scenario: Scenario) -> MeasureKind:
    return {
        "fay_herriot": MeasureKind("ml_fay_herriot"),
        "clustered_lmm": MeasureKind("least_squares"),
        "two_level_logistic": MeasureKind("glmm_sse", {"quadrature_order": 12, "restarts": 2}),
    }[scenario.family]


def default_sigma(scenario: Scenario) -> SigmaKind:
    return {
        "fay_herriot": SigmaKind("exact_f_numeric"),
        "clustered_lmm": SigmaKind("observed_variance"),
        "two_level_logistic": SigmaKind("observed_variance"),
    }[scenario.family]


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FenceStrategy:
    name: str
    c: float


@dataclass(frozen=True)
class FBFenceStrategy:
    name: str
    c: float


@dataclass(frozen=True)
class AdaptiveStrategy:
    name: str
    config: AdaptiveConfig


@dataclass(frozen=True)
class GicStrategy:
    name: str
    config: GicConfig


Strategy = FenceStrategy | FBFenceStrategy | AdaptiveStrategy | GicStrategy


@dataclass(frozen=True)
class StudyResult:
    """Per-strategy tallies and the per-replicate selection trace."""

    scenario: Scenario
    strategy_names: tuple[str, ...]
    counts: dict[str, dict[str, int]]
    selections: dict[str, tuple[str, ...]]
    seconds_per_replicate: tuple[float, ...]

    def correct(self, name: str) -> int:
        return self.counts[name]["correct"]


def _run_strategy(
    strategy: Strategy,
    space: ModelSpace,
    dataset: Dataset,
    measure: MeasureKind,
    sigma_kind: SigmaKind,
    rng: RngStream,
) -> CandidateModel:
    if isinstance(strategy, FenceStrategy):
        fits = fit_table(dataset, space, measure)
        sig = sigma_table(
            space.models, fits, space.full_model, sigma_kind, dataset=dataset, measure=measure
        )
        return fence_select(space, fits, sig, FenceConfig(c=strategy.c, sigma_kind=sigma_kind)).selected
    if isinstance(strategy, FBFenceStrategy):
        return fb_fence(space, dataset, measure, sigma_kind, strategy.c).selected
    if isinstance(strategy, AdaptiveStrategy):
        return adaptive_select(space, dataset, measure, sigma_kind, strategy.config, rng).selected
    if isinstance(strategy, GicStrategy):
        fits = fit_table(dataset, space, measure)
        return gic_select(space, fits, strategy.config)
    raise ValidationError(f"unknown strategy {strategy!r}")


def run_study(
    scenario: Scenario,
    strategies: list[Strategy],
    rng: RngStream,
    *,
    forced=("x1",),
    measure: MeasureKind | None = None,
    sigma_kind: SigmaKind | None = None,
) -> StudyResult:
    """Paired comparison of the strategies over the scenario's replicates.

    Every strategy sees the identical dataset within a replicate. A strategy
    failure on a replicate is recorded under the 'error' label rather than
    aborting the study.
    """
    names = [s.name for s in strategies]
    if len(set(names)) != len(names):
        raise ValidationError("strategy names must be unique")
    measure = measure or default_measure(scenario)
    sigma_kind = sigma_kind or default_sigma(scenario)
    truth = scenario.truth_model
    counts = {nm: {"correct": 0, "underfit": 0, "overfit": 0, "error": 0} for nm in names}
    selections: dict[str, list[str]] = {nm: [] for nm in names}
    seconds = []
    space = None
    for rep in range(scenario.replications):
        dataset = generate(scenario, rep, rng)
        if space is None:
            space = enumerate_all_subsets(dataset, forced=forced)
        t0 = time.perf_counter()
        for strategy in strategies:
            srng = rng.substream(
                stream_id=rep, purpose=f"{rng.purpose}/strategy/{strategy.name}"
            )
            try:
                selected = _run_strategy(strategy, space, dataset, measure, sigma_kind, srng)
            except FencekitError:
                counts[strategy.name]["error"] += 1
                selections[strategy.name].append("<error>")
                continue
            counts[strategy.name][classify_selection(selected, truth)] += 1
            selections[strategy.name].append(selected.id)
        seconds.append(time.perf_counter() - t0)
    return StudyResult(
        scenario=scenario,
        strategy_names=tuple(names),
        counts=counts,
        selections={nm: tuple(v) for nm, v in selections.items()},
        seconds_per_replicate=tuple(seconds),
    )


# ---------------------------------------------------------------------------
# Canned paper-style scenarios
# ---------------------------------------------------------------------------


def table1_scenario(model_number: int, replications: int = 100, design_seed: int = 31) -> Scenario:
    """Area-level study: m = 30, five candidate columns, A = 1."""
    betas = {
        1: (1.0, 0.0, 0.0, 0.0, 0.0),
        2: (1.0, 2.0, 0.0, 0.0, 0.0),
        3: (1.0, 2.0, 3.0, 0.0, 0.0),
        4: (1.0, 2.0, 3.0, 2.0, 0.0),
        5: (1.0, 2.0, 3.0, 2.0, 3.0),
    }
    return Scenario(
        family="fay_herriot",
        sizes=(30,),
        beta=betas[model_number],
        variance={"A": 1.0},
        replications=replications,
        design_seed=design_seed,
    )


def table2_scenario(
    beta: tuple[float, ...],
    rho: float,
    replications: int = 100,
    design_seed: int = 47,
) -> Scenario:
    """Clustered study: m = 100 clusters of size 5, sigma = tau = 1."""
    return Scenario(
        family="clustered_lmm",
        sizes=(100, 5),
        beta=beta,
        variance={"sigma_sq": 1.0, "tau_sq": 1.0, "rho": rho},
        replications=replications,
        design_seed=design_seed,
    )
