import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fencekit.errors import (
    InconsistentNesting,
    TooManyCandidates,
    ValidationError,
)
from fencekit.model_space import (
    CandidateModel,
    Dataset,
    classify_selection,
    enumerate_all_subsets,
    is_submodel,
)


def small_dataset(K=5, n=8, seed=0):
    rng = np.random.default_rng(seed)
    cols = {"x1": np.ones(n)}
    for j in range(2, K + 1):
        cols[f"x{j}"] = rng.standard_normal(n)
    return Dataset(y=rng.standard_normal(n), candidates=cols)


class TestDataset:
    def test_rejects_length_mismatch(self):
        with pytest.raises(Exception):
            Dataset(y=np.ones(3), candidates={"x1": np.ones(4)})

    def test_rejects_nonpositive_sampling_variances(self):
        with pytest.raises(ValidationError):
            Dataset(
                y=np.ones(2),
                candidates={"x1": np.ones(2)},
                sampling_variances=np.array([1.0, 0.0]),
            )

    def test_rejects_family_spanning_communities(self):
        with pytest.raises(InconsistentNesting):
            Dataset(
                y=np.ones(4),
                candidates={"x1": np.ones(4)},
                community=np.array([0, 0, 1, 1]),
                family=np.array([0, 1, 1, 2]),
            )

    def test_nested_grouping_accepted(self):
        ds = Dataset(
            y=np.ones(4),
            candidates={"x1": np.ones(4)},
            community=np.array([0, 0, 1, 1]),
            family=np.array([0, 1, 2, 3]),
        )
        assert ds.n == 4


class TestEnumerate:
    def test_table1_space_has_16_models(self):
        space = enumerate_all_subsets(small_dataset(K=5), forced=("x1",))
        assert len(space.models) == 16
        assert space.full_model.fixed_effects == ("x1", "x2", "x3", "x4", "x5")
        assert [m.dimension for m in space.minimal_models] == [1]

    def test_single_candidate_degenerate_space(self):
        space = enumerate_all_subsets(small_dataset(K=1), forced=("x1",))
        assert len(space.models) == 1
        assert space.full_model is space.models[0]

    def test_free_enumeration_tier_sizes(self):
        space = enumerate_all_subsets(small_dataset(K=3), forced=())
        assert len(space.models) == 8
        # binomial-coefficient oracle for tier sizes at dimensions 0..3
        from math import comb

        sizes = {d: len(space.tier(d)) for d in space.tiers}
        assert sizes == {d: comb(3, d) for d in range(4)}

    def test_tiers_partition_the_space(self):
        space = enumerate_all_subsets(small_dataset(K=4), forced=("x1",))
        assert sum(len(space.tier(d)) for d in space.tiers) == len(space.models)

    def test_random_effects_shift_dimensions(self):
        space = enumerate_all_subsets(
            small_dataset(K=3), forced=("x1",), random_effects=("u", "v")
        )
        assert space.minimal_models[0].dimension == 3  # 1 covariate + 2 variances

    def test_guard_against_blowup(self):
        n = 3
        cols = {f"x{j}": np.ones(n) for j in range(1, 27)}
        ds = Dataset(y=np.ones(n), candidates=cols)
        with pytest.raises(TooManyCandidates):
            enumerate_all_subsets(ds, forced=())

    def test_ids_unique_and_stable(self):
        space = enumerate_all_subsets(small_dataset(K=4), forced=("x1",))
        ids = [m.id for m in space.models]
        assert len(set(ids)) == len(ids)
        assert space.by_id("x1+x3").fixed_effects == ("x1", "x3")


names = st.lists(st.sampled_from([f"x{i}" for i in range(1, 7)]), unique=True)


class TestIsSubmodel:
    def test_reflexive_and_examples(self):
        a = CandidateModel(("x1",))
        b = CandidateModel(("x1", "x2"))
        c = CandidateModel(("x1", "x3"))
        assert is_submodel(a, a)
        assert is_submodel(a, b)
        assert not is_submodel(c, b)

    @given(names, names, names)
    @settings(max_examples=100, deadline=None)
    def test_partial_order(self, fa, fb, fc):
        a, b, c = (CandidateModel(tuple(f)) for f in (fa, fb, fc))
        assert is_submodel(a, a)
        if is_submodel(a, b) and is_submodel(b, a):
            assert a.fixed_effects == b.fixed_effects
        if is_submodel(a, b) and is_submodel(b, c):
            assert is_submodel(a, c)


class TestClassifySelection:
    def test_equality_is_correct(self):
        t = CandidateModel(("x1", "x4"))
        assert classify_selection(t, t) == "correct"

    def test_strict_superset_is_overfit(self):
        truth = CandidateModel(("x1", "x4"))
        sel = CandidateModel(("x1", "x2", "x4"))
        assert classify_selection(sel, truth) == "overfit"

    def test_missing_member_is_underfit(self):
        truth = CandidateModel(("x1", "x2", "x3", "x4", "x5"))
        sel = CandidateModel(("x1", "x2", "x4", "x5"))
        assert classify_selection(sel, truth) == "underfit"

    @given(names, names)
    @settings(max_examples=100, deadline=None)
    def test_labels_exclusive_and_exhaustive(self, fs, ft):
        sel = CandidateModel(tuple(fs))
        truth = CandidateModel(tuple(ft))
        label = classify_selection(sel, truth)
        missing = set(truth.fixed_effects) - set(sel.fixed_effects)
        if label == "correct":
            assert sel.fixed_effects == truth.fixed_effects
        elif label == "underfit":
            assert missing
        else:
            assert not missing and set(sel.fixed_effects) > set(truth.fixed_effects)
