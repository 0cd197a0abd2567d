"""Datasets, candidate models and the enumerated model space.

A candidate model is a subset of named covariate columns plus a (possibly
empty) subset of named random-effect structures. The space knows its full
model, its minimum-dimension models and the dimension tiers the fence
algorithm walks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySpace,
    InconsistentNesting,
    TooManyCandidates,
    ValidationError,
)

_MAX_FREE_CANDIDATES = 24


@dataclass(frozen=True)
class Dataset:
    """Response vector with named candidate covariates and optional structure.

    ``candidates`` maps column name -> length-n array. ``cluster`` gives a
    one-level grouping (cluster id per observation); ``community``/``family``
    give a nested two-level grouping. ``sampling_variances`` are the known
    per-observation sampling variances of the area-level model.
    """

    y: np.ndarray
    candidates: dict[str, np.ndarray]
    cluster: np.ndarray | None = None
    community: np.ndarray | None = None
    family: np.ndarray | None = None
    sampling_variances: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "y", y)
        n = y.shape[0]
        if n < 1:
            raise ValidationError("dataset must contain at least one observation")
        cols = {}
        for name, col in self.candidates.items():
            col = np.asarray(col, dtype=float).ravel()
            if col.shape[0] != n:
                raise DimensionMismatch(f"column {name!r} has length {col.shape[0]}, expected {n}")
            cols[name] = col
        object.__setattr__(self, "candidates", cols)
        for attr in ("cluster", "community", "family"):
            val = getattr(self, attr)
            if val is not None:
                val = np.asarray(val).ravel()
                if val.shape[0] != n:
                    raise DimensionMismatch(f"{attr} ids have length {val.shape[0]}, expected {n}")
                object.__setattr__(self, attr, val)
        if (self.community is None) != (self.family is None):
            raise ValidationError("two-level grouping needs both community and family ids")
        if self.community is not None:
            # each family must sit inside exactly one community
            seen: dict = {}
            for com, fam in zip(self.community.tolist(), self.family.tolist()):
                if fam in seen and seen[fam] != com:
                    raise InconsistentNesting(
                        f"family {fam!r} appears under communities {seen[fam]!r} and {com!r}"
                    )
                seen[fam] = com
        if self.sampling_variances is not None:
            d = np.asarray(self.sampling_variances, dtype=float).ravel()
            if d.shape[0] != n:
                raise DimensionMismatch(f"sampling variances have length {d.shape[0]}, expected {n}")
            if np.any(d <= 0):
                raise ValidationError("sampling variances must be strictly positive")
            object.__setattr__(self, "sampling_variances", d)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def candidate_names(self) -> tuple[str, ...]:
        return tuple(self.candidates)

    def design_matrix(self, names) -> np.ndarray:
        """Column-stack the named candidates (n x len(names))."""
        names = list(names)
        missing = [nm for nm in names if nm not in self.candidates]
        if missing:
            raise ValidationError(f"unknown candidate columns: {missing}")
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.candidates[nm] for nm in names])


def model_id(fixed_effects, random_effects=()) -> str:
    """Stable human-readable key: random names, '|', covariate names."""
    fixed = "+".join(sorted(fixed_effects)) or "0"
    rand = "+".join(sorted(random_effects))
    return f"{rand}|{fixed}" if rand else fixed


@dataclass(frozen=True)
class CandidateModel:
    """A fixed-effect subset and random-effect structure subset."""

    fixed_effects: tuple[str, ...]
    random_effects: tuple[str, ...] = ()
    dimension: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "fixed_effects", tuple(sorted(self.fixed_effects)))
        object.__setattr__(self, "random_effects", tuple(sorted(self.random_effects)))
        if self.dimension < 0:
            object.__setattr__(
                self, "dimension", len(self.fixed_effects) + len(self.random_effects)
            )

    @property
    def id(self) -> str:
        return model_id(self.fixed_effects, self.random_effects)


@dataclass(frozen=True)
class ModelSpace:
    """Finite candidate set with its full model and dimension tiers."""

    models: tuple[CandidateModel, ...]

    def __post_init__(self):
        if not self.models:
            raise EmptySpace("model space contains no models")
        object.__setattr__(self, "models", tuple(self.models))
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValidationError("model ids are not unique")

    @property
    def full_model(self) -> CandidateModel:
        """The model of which every other model is a submodel."""
        for cand in self.models:
            if all(is_submodel(m, cand) for m in self.models):
                return cand
        raise ValidationError("space contains no full model")

    def has_full_model(self) -> bool:
        try:
            self.full_model
        except ValidationError:
            return False
        return True

    @property
    def minimal_models(self) -> tuple[CandidateModel, ...]:
        dmin = min(m.dimension for m in self.models)
        return tuple(m for m in self.models if m.dimension == dmin)

    @property
    def tiers(self) -> tuple[int, ...]:
        """Sorted distinct dimensions d_1 < d_2 < ... exhausting the space."""
        return tuple(sorted({m.dimension for m in self.models}))

    def tier(self, dim: int) -> tuple[CandidateModel, ...]:
        return tuple(m for m in self.models if m.dimension == dim)

    def by_id(self, mid: str) -> CandidateModel:
        for m in self.models:
            if m.id == mid:
                return m
        raise ValidationError(f"no model with id {mid!r}")


def enumerate_all_subsets(
    dataset: Dataset,
    forced=(),
    *,
    random_effects=(),
) -> ModelSpace:
    """All covariate subsets containing ``forced``: 2^(K - |forced|) models.

    Every model carries the same ``random_effects`` structures; the model
    dimension counts covariates plus one variance parameter per structure
    (variance parameters common to all models, like the area-level variance
    under the profiled likelihood, are excluded by simply not listing them).
    """
    forced = tuple(sorted(forced))
    names = dataset.candidate_names
    unknown = [nm for nm in forced if nm not in names]
    if unknown:
        raise ValidationError(f"forced columns not among candidates: {unknown}")
    free = [nm for nm in names if nm not in forced]
    if len(free) > _MAX_FREE_CANDIDATES:
        raise TooManyCandidates(
            f"{len(free)} free candidates would enumerate 2^{len(free)} models"
        )
    rand = tuple(sorted(random_effects))
    models = []
    for r in range(len(free) + 1):
        for combo in combinations(free, r):
            models.append(CandidateModel(fixed_effects=forced + combo, random_effects=rand))
    models.sort(key=lambda m: (m.dimension, m.id))
    return ModelSpace(models=tuple(models))


def is_submodel(a: CandidateModel, b: CandidateModel) -> bool:
    """True iff a's covariates and random structures are both subsets of b's."""
    return set(a.fixed_effects) <= set(b.fixed_effects) and set(a.random_effects) <= set(
        b.random_effects
    )


def classify_selection(selected: CandidateModel, truth: CandidateModel) -> str:
    """'correct', 'underfit' (a true term is missing) or 'overfit' (strict superset)."""
    if selected.fixed_effects == truth.fixed_effects and selected.random_effects == truth.random_effects:
        return "correct"
    if set(truth.fixed_effects) - set(selected.fixed_effects) or set(truth.random_effects) - set(
        selected.random_effects
    ):
        return "underfit"
    return "overfit"
