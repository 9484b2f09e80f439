import numpy as np
import pytest

from mmsbm_rec import (
    MFConfig, dataset_from_triples, item_item_fit, item_item_predict, mf_fit,
    mf_objective, mf_predict, naive_predict, scale_from_values,
)


class TestNaive:
    def test_item_mean(self, scale5):
        ds = dataset_from_triples(
            [("a", "x", 4), ("b", "x", 5), ("a", "y", 3)], scale5)
        assert naive_predict(ds, ds.item_index["x"], scale5) == 4.5
        assert naive_predict(ds, ds.item_index["y"], scale5) == 3.0

    def test_unseen_item_falls_back_to_global_mean(self, scale5):
        ds = dataset_from_triples(
            [("a", "x", 4), ("b", "x", 5), ("a", "y", 3)], scale5)
        assert naive_predict(ds, None, scale5) == pytest.approx(4.0)

    def test_invariant_under_rater_permutation(self, scale5):
        triples = [("a", "x", 4), ("b", "x", 2), ("c", "x", 5), ("c", "y", 1)]
        ds1 = dataset_from_triples(triples, scale5)
        ds2 = dataset_from_triples(list(reversed(triples)), scale5)
        assert naive_predict(ds1, ds1.item_index["x"], scale5) == \
            naive_predict(ds2, ds2.item_index["x"], scale5)


class TestItemItem:
    def test_identical_centered_vectors_have_similarity_one(self, scale5):
        # both raters give x and y the same value, so after centering the two
        # item vectors coincide exactly: u -> (2/3, 2/3), v -> (-1, -1)
        triples = [("u", "x", 5), ("u", "y", 5), ("u", "z", 1),
                   ("v", "x", 2), ("v", "y", 2), ("v", "z", 5)]
        ds = dataset_from_triples(triples, scale5)
        model = item_item_fit(ds, k_neighbors=5)
        x, y = ds.item_index["x"], ds.item_index["y"]
        pos = list(model.neighbor_items[x]).index(y)
        assert model.neighbor_sims[x][pos] == pytest.approx(1.0, abs=1e-12)

    def test_no_common_raters_not_in_neighbor_lists(self, scale5):
        triples = [("a", "x", 4), ("a", "y", 3), ("b", "z", 5), ("b", "w", 2)]
        ds = dataset_from_triples(triples, scale5)
        model = item_item_fit(ds, k_neighbors=5)
        x, z = ds.item_index["x"], ds.item_index["z"]
        assert z not in model.neighbor_items[x]
        assert x not in model.neighbor_items[z]

    def test_similarity_is_symmetric(self, scale5):
        rng = np.random.default_rng(0)
        triples = []
        for u in range(12):
            for i in rng.choice(8, size=5, replace=False):
                triples.append((f"u{u}", f"i{i}", int(rng.integers(1, 6))))
        ds = dataset_from_triples(triples, scale5)
        model = item_item_fit(ds, k_neighbors=8)
        sims = {}
        for i in range(ds.n_items):
            for j, s in zip(model.neighbor_items[i], model.neighbor_sims[i]):
                sims[(i, int(j))] = s
        for (i, j), s in sims.items():
            assert sims.get((j, i), s) == pytest.approx(s, abs=1e-12)

    def test_neighbor_lists_sorted_and_capped(self, scale5):
        rng = np.random.default_rng(1)
        triples = []
        for u in range(15):
            for i in rng.choice(10, size=6, replace=False):
                triples.append((f"u{u}", f"i{i}", int(rng.integers(1, 6))))
        ds = dataset_from_triples(triples, scale5)
        model = item_item_fit(ds, k_neighbors=3)
        for i in range(ds.n_items):
            sims = model.neighbor_sims[i]
            assert len(sims) <= 3
            assert np.all(np.diff(sims) <= 1e-15)
            assert np.all(sims > 0)

    def test_single_neighbor_prediction(self, scale5):
        # x's only positively similar neighbor is y (x-q similarity comes out
        # negative), so predicting x for w is exactly w's rating of y.
        triples = [("u", "x", 4), ("u", "y", 4), ("u", "q", 2),
                   ("v", "x", 5), ("v", "y", 5), ("v", "q", 2),
                   ("w", "y", 4)]
        ds = dataset_from_triples(triples, scale5)
        model = item_item_fit(ds, k_neighbors=5)
        x = ds.item_index["x"]
        assert list(model.neighbor_items[x]) == [ds.item_index["y"]]
        got = item_item_predict(model, ds, ds.user_index["w"], x, scale5)
        assert got == pytest.approx(4.0)

    def test_fallback_when_user_rated_no_neighbors(self, scale5):
        triples = [("a", "x", 4), ("b", "x", 2), ("c", "y", 5)]
        ds = dataset_from_triples(triples, scale5)
        model = item_item_fit(ds, k_neighbors=5)
        got = item_item_predict(model, ds, ds.user_index["c"],
                                ds.item_index["x"], scale5)
        assert got == naive_predict(ds, ds.item_index["x"], scale5)

    def test_cold_queries_fall_back(self, scale5):
        ds = dataset_from_triples([("a", "x", 4), ("b", "x", 2)], scale5)
        model = item_item_fit(ds, k_neighbors=5)
        assert item_item_predict(model, ds, None, ds.item_index["x"],
                                 scale5) == 3.0
        assert item_item_predict(model, ds, ds.user_index["a"], None,
                                 scale5) == ds.global_mean_value()


def small_dataset(seed=0, n_users=10, n_items=8, per_user=4):
    rng = np.random.default_rng(seed)
    scale = scale_from_values([1, 2, 3, 4, 5])
    triples = []
    for u in range(n_users):
        for i in rng.choice(n_items, size=per_user, replace=False):
            triples.append((f"u{u}", f"i{i}", int(rng.integers(1, 6))))
    return dataset_from_triples(triples, scale), scale


class TestMF:
    def test_zero_model_predicts_global_mean(self, scale5):
        ds, scale = small_dataset()
        config = MFConfig(k_factors=2, epochs=1, learning_rate=1e-9,
                          init_scale=0.0)
        model = mf_fit(ds, config, scale)
        got = mf_predict(model, 0, 0, scale)
        assert got == pytest.approx(ds.global_mean_value(), abs=1e-6)

    def test_predictions_clamped_to_scale(self):
        ds, scale = small_dataset(seed=3)
        config = MFConfig(k_factors=4, epochs=30, learning_rate=0.05,
                          reg_lambda=0.0, seed=1)
        model = mf_fit(ds, config, scale)
        for u in range(ds.n_users):
            for i in range(ds.n_items):
                v = mf_predict(model, u, i, scale)
                assert 1.0 <= v <= 5.0

    def test_cold_prediction_is_mu_plus_known_bias(self):
        ds, scale = small_dataset(seed=5)
        model = mf_fit(ds, MFConfig(k_factors=3, epochs=10, seed=2), scale)
        want = model.mu + model.item_biases[2]
        assert mf_predict(model, None, 2, scale) == pytest.approx(
            np.clip(want, 1.0, 5.0))
        assert mf_predict(model, None, None, scale) == pytest.approx(
            np.clip(model.mu, 1.0, 5.0))

    def test_heavy_regularization_drives_prediction_to_mean(self):
        ds, scale = small_dataset(seed=7)
        config = MFConfig(k_factors=3, epochs=60, learning_rate=0.01,
                          reg_lambda=50.0, seed=0, init_scale=0.01)
        model = mf_fit(ds, config, scale)
        assert np.abs(model.user_factors).max() < 1e-3
        assert np.abs(model.item_factors).max() < 1e-3
        # biases are unregularized but bounded; predictions stay near mu
        got = mf_predict(model, 0, 0, scale)
        assert got == pytest.approx(model.mu + model.user_biases[0]
                                    + model.item_biases[0], abs=1e-6)

    def test_objective_decreases_per_epoch_on_toy_data(self):
        ds, scale = small_dataset(seed=11, n_users=5, n_items=6, per_user=4)
        previous = None
        for epochs in range(1, 9):
            config = MFConfig(k_factors=3, epochs=epochs, learning_rate=1e-3,
                              reg_lambda=0.0, seed=4)
            model = mf_fit(ds, config, scale)
            objective = mf_objective(model, ds)
            if previous is not None:
                assert objective <= previous + 1e-6
            previous = objective

    def test_single_rating_sgd_pass_reduces_error(self, scale5):
        ds = dataset_from_triples([("a", "x", 5), ("a", "y", 1),
                                   ("b", "x", 1)], scale5)
        config = MFConfig(k_factors=2, epochs=1, learning_rate=1e-3,
                          reg_lambda=0.0, seed=9)
        model = mf_fit(ds, config, scale5)
        before = sum(
            (ds.scale.value_of(r) - ds.global_mean_value()) ** 2
            for r in ds.ratings)
        after = sum(
            (ds.scale.value_of(r) - mf_predict(model, u, i, scale5)) ** 2
            for u, i, r in zip(ds.users, ds.items, ds.ratings))
        assert after < before

    def test_divergence_detected(self):
        ds, scale = small_dataset(seed=13)
        config = MFConfig(k_factors=3, epochs=50, learning_rate=5.0, seed=0)
        with pytest.raises(RuntimeError, match="diverged"):
            mf_fit(ds, config, scale)

    def test_deterministic_given_seed(self):
        ds, scale = small_dataset(seed=17)
        a = mf_fit(ds, MFConfig(k_factors=3, epochs=5, seed=21), scale)
        b = mf_fit(ds, MFConfig(k_factors=3, epochs=5, seed=21), scale)
        assert np.array_equal(a.user_factors, b.user_factors)
        assert np.array_equal(a.item_biases, b.item_biases)
