import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsbm_rec import (
    ModelParams, dataset_from_triples, scale_from_labels, scale_from_spec,
    scale_from_values, validate_params,
)


class TestRatingScale:
    def test_integer_movie_scale(self):
        scale = scale_from_labels([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
        assert scale.size == 5
        assert scale.index_of(3) == 2
        assert scale.value_of(4) == 5.0

    def test_half_integer_scale(self):
        values = np.arange(0.5, 5.01, 0.5)
        scale = scale_from_values(values)
        assert scale.size == 10
        assert scale.resolve("4.5") == 8

    def test_duplicate_label_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            scale_from_labels([1, 1, 2], [1, 2, 3])

    def test_non_increasing_values_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            scale_from_labels([1, 2, 3], [1.0, 1.0, 2.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            scale_from_labels([1, 2, 3], [1.0, 2.0])

    def test_single_label_rejected(self):
        with pytest.raises(ValueError):
            scale_from_labels(["only"], [1.0])

    def test_token_resolution(self):
        scale = scale_from_values([1, 2, 3, 4, 5])
        assert scale.resolve("3") == 2
        assert scale.resolve(3) == 2
        assert scale.resolve(3.0) == 2
        with pytest.raises(ValueError, match="unknown rating label"):
            scale.resolve("6")

    def test_spec_parsing(self):
        assert scale_from_spec("1,2,3,4,5").size == 5
        half = scale_from_spec("0.5:5:0.5")
        assert half.size == 10
        assert half.value_of(0) == 0.5
        assert half.value_of(9) == 5.0

    def test_nearest_index_ties_go_down(self):
        scale = scale_from_values([1, 2, 3, 4, 5])
        assert scale.nearest_index(2.5) == 1
        assert scale.nearest_index(2.51) == 2
        assert scale.nearest_index(0.2) == 0
        assert scale.nearest_index(9.0) == 4
        got = scale.nearest_indices([2.5, 2.51, 0.2, 9.0, 3.0])
        assert got.tolist() == [1, 2, 0, 4, 2]


class TestDataset:
    def test_counts_and_degrees(self, scale5):
        ds = dataset_from_triples(
            [("a", "x", 3), ("a", "y", 5), ("b", "x", 1)], scale5)
        assert (ds.n_users, ds.n_items, ds.n_ratings) == (2, 2, 3)
        assert ds.user_degrees[ds.user_index["a"]] == 2
        assert ds.user_degrees[ds.user_index["b"]] == 1
        assert ds.item_degrees[ds.item_index["x"]] == 2
        assert ds.item_degrees[ds.item_index["y"]] == 1

    def test_duplicate_pair_rejected(self, scale5):
        with pytest.raises(ValueError, match="duplicate rating"):
            dataset_from_triples([("a", "x", 3), ("a", "x", 4)], scale5)

    def test_unknown_label_rejected(self, scale5):
        with pytest.raises(ValueError, match="unknown rating label"):
            dataset_from_triples([("a", "x", 7)], scale5)

    def test_empty_rejected(self, scale5):
        with pytest.raises(ValueError, match="no ratings"):
            dataset_from_triples([], scale5)

    def test_neighbors(self, toy_dataset):
        ds = toy_dataset
        items, ratings = ds.user_neighbors(ds.user_index["a"])
        got = {(ds.item_ids[i], int(r)) for i, r in zip(items, ratings)}
        assert got == {("x", ds.scale.resolve(3)), ("y", ds.scale.resolve(5)),
                       ("z", ds.scale.resolve(4))}
        users, ratings = ds.item_neighbors(ds.item_index["y"])
        got = {(ds.user_ids[u], int(r)) for u, r in zip(users, ratings)}
        assert got == {("a", 4), ("b", 1), ("d", 4)}

    def test_subset_keeps_external_ids(self, toy_dataset):
        ds = toy_dataset
        keep = [t for t, u in enumerate(ds.users) if ds.user_ids[u] != "a"]
        sub = ds.subset(keep)
        assert "a" not in sub.user_index
        assert sub.n_ratings == ds.n_ratings - 3
        original = {(uid, iid, lab) for uid, iid, lab in ds.triples()
                    if uid != "a"}
        assert set(sub.triples()) == original

    @given(st.lists(
        st.tuples(st.integers(0, 5), st.integers(0, 5)),
        min_size=1, max_size=30, unique=True,
    ))
    @settings(max_examples=50, deadline=None)
    def test_degree_sums_match_rating_count(self, pairs):
        scale = scale_from_values([1, 2, 3])
        triples = [(f"u{a}", f"i{b}", (a + b) % 3 + 1) for a, b in pairs]
        ds = dataset_from_triples(triples, scale)
        assert ds.user_degrees.sum() == ds.n_ratings
        assert ds.item_degrees.sum() == ds.n_ratings

    @given(st.lists(st.text(min_size=1, max_size=6), min_size=1, max_size=15,
                    unique=True))
    @settings(max_examples=50, deadline=None)
    def test_reindexing_is_a_bijection(self, user_ids):
        scale = scale_from_values([1, 2])
        triples = [(uid, "item", 1) for uid in user_ids]
        ds = dataset_from_triples(triples, scale)
        round_tripped = [ds.user_ids[ds.user_index[uid]] for uid in user_ids]
        assert round_tripped == user_ids
        assert len(set(ds.user_index.values())) == len(user_ids)


class TestValidateParams:
    def test_exact_normalization_passes(self):
        params = ModelParams(
            theta=np.array([[0.5, 0.5]]),
            eta=np.array([[1.0]]),
            p=np.array([[[1.0, 0.0, 0.0, 0.0, 0.0]], [[0.2] * 5]]),
        )
        assert validate_params(params, tol=1e-12) == []

    def test_bad_row_sum_reported(self):
        params = ModelParams(
            theta=np.array([[0.5, 0.6]]),
            eta=np.array([[1.0]]),
            p=np.array([[[0.5, 0.5]], [[0.5, 0.5]]]),
        )
        violations = validate_params(params)
        assert any("theta[0]" in v and "1.1" in v for v in violations)

    def test_out_of_range_entry_reported(self):
        params = ModelParams(
            theta=np.array([[1.5, -0.5]]),
            eta=np.array([[1.0]]),
            p=np.array([[[0.5, 0.5]], [[0.5, 0.5]]]),
        )
        violations = validate_params(params)
        assert any("below 0" in v for v in violations)
        assert any("above 1" in v for v in violations)

    def test_tolerance_boundary(self):
        eps = 5e-10
        params = ModelParams(
            theta=np.array([[0.5, 0.5 + eps]]),
            eta=np.array([[1.0]]),
            p=np.array([[[0.5, 0.5]], [[0.5, 0.5]]]),
        )
        assert validate_params(params, tol=1e-9) == []
        assert validate_params(params, tol=1e-10) != []

    def test_shape_mismatch_rejected_on_construction(self):
        with pytest.raises(ValueError, match="incompatible"):
            ModelParams(
                theta=np.ones((2, 2)) / 2,
                eta=np.ones((2, 3)) / 3,
                p=np.full((2, 2, 2), 0.5),
            )
