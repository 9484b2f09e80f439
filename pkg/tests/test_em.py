import numpy as np
import pytest

from mmsbm_rec import (
    DegenerateSupportError, FitConfig, ModelParams, dataset_from_triples,
    em_step, fit, init_params, log_likelihood, responsibility,
    scale_from_values, validate_params,
)
from reference import (
    links_of, ref_em_step, ref_log_likelihood, ref_responsibility,
)
from conftest import make_random_instance


class TestInitParams:
    def test_single_group_is_all_ones(self, scale5):
        config = FitConfig(n_user_groups=1, n_item_groups=1, seed=3)
        params = init_params(config, 4, 5, scale5)
        assert np.all(params.theta == 1.0)
        assert np.all(params.eta == 1.0)

    def test_same_seed_is_bitwise_identical(self, scale5):
        config = FitConfig(n_user_groups=3, n_item_groups=2, seed=11)
        a = init_params(config, 6, 7, scale5)
        b = init_params(config, 6, 7, scale5)
        assert np.array_equal(a.theta, b.theta)
        assert np.array_equal(a.eta, b.eta)
        assert np.array_equal(a.p, b.p)

    @pytest.mark.parametrize("seed", [0, 1, 2, 99])
    def test_normalized_by_construction(self, seed, scale5):
        config = FitConfig(n_user_groups=4, n_item_groups=3, seed=seed)
        params = init_params(config, 5, 6, scale5)
        assert validate_params(params, tol=1e-12) == []

    def test_config_invariants_enforced(self, scale5):
        with pytest.raises(ValueError):
            FitConfig(n_user_groups=0).validate()
        with pytest.raises(ValueError):
            FitConfig(tol=0.0).validate()
        with pytest.raises(ValueError):
            FitConfig(prob_floor=0.5).validate(n_labels=5)


class TestResponsibility:
    def test_pure_memberships_concentrate(self):
        theta = np.zeros((3, 3))
        theta[:, 1] = 1.0
        eta = np.zeros((4, 4))
        eta[:, 2] = 1.0
        p = np.full((3, 4, 2), 0.5)
        params = ModelParams(theta=theta, eta=eta, p=p)
        omega = responsibility(params, 0, 0, 1)
        expected = np.zeros((3, 4))
        expected[1, 2] = 1.0
        assert np.array_equal(omega, expected)

    def test_symmetric_inputs_give_uniform(self):
        params = ModelParams(
            theta=np.full((2, 2), 0.5),
            eta=np.full((2, 2), 0.5),
            p=np.full((2, 2, 4), 0.25),
        )
        omega = responsibility(params, 0, 1, 2)
        np.testing.assert_allclose(omega, 0.25, atol=1e-15)

    def test_spec_worked_example(self):
        # theta_u=(0.6,0.4), eta_i=(0.5,0.5), per-pair probabilities of the
        # observed label [[0.2,0.4],[0.1,0.3]]: weights [[.06,.12],[.02,.06]]
        # over denominator 0.26.
        p = np.empty((2, 2, 2))
        p[:, :, 0] = [[0.2, 0.4], [0.1, 0.3]]
        p[:, :, 1] = 1.0 - p[:, :, 0]
        params = ModelParams(
            theta=np.array([[0.6, 0.4]]),
            eta=np.array([[0.5, 0.5]]),
            p=p,
        )
        omega = responsibility(params, 0, 0, 0)
        expected = np.array([[0.06, 0.12], [0.02, 0.06]]) / 0.26
        np.testing.assert_allclose(omega, expected, atol=1e-15)
        np.testing.assert_allclose(
            omega, ref_responsibility(params.theta[0], params.eta[0],
                                      params.p[:, :, 0]),
            atol=1e-15)

    def test_rows_sum_to_one_on_random_instances(self):
        for seed in range(10):
            dataset, params = make_random_instance(seed, n_labels=4)
            for u, i, r in links_of(dataset)[:5]:
                omega = responsibility(params, u, i, r)
                assert abs(omega.sum() - 1.0) < 1e-12

    def test_zero_denominator_raises(self):
        params = ModelParams(
            theta=np.array([[1.0, 0.0]]),
            eta=np.array([[1.0]]),
            p=np.array([[[0.0, 1.0]], [[0.5, 0.5]]]),
        )
        with pytest.raises(DegenerateSupportError):
            responsibility(params, 0, 0, 0)


class TestEmStep:
    def test_single_group_matches_empirical_frequencies(self):
        scale = scale_from_values([1, 2])
        ds = dataset_from_triples(
            [("a", "w", 1), ("a", "x", 1), ("b", "y", 1), ("b", "z", 2)],
            scale)
        params = init_params(FitConfig(1, 1, seed=0), ds.n_users, ds.n_items,
                             scale)
        stepped = em_step(params, ds)
        np.testing.assert_array_equal(stepped.p[0, 0], [0.75, 0.25])

    def test_single_group_fixed_point_is_exact(self):
        scale = scale_from_values([1, 2])
        ds = dataset_from_triples(
            [("a", "w", 1), ("a", "x", 1), ("b", "y", 1), ("b", "z", 2)],
            scale)
        params = init_params(FitConfig(1, 1, seed=5), ds.n_users, ds.n_items,
                             scale)
        once = em_step(params, ds)
        twice = em_step(once, ds)
        assert np.array_equal(once.theta, twice.theta)
        assert np.array_equal(once.eta, twice.eta)
        assert np.array_equal(once.p, twice.p)

    def test_output_is_normalized(self):
        for seed in range(8):
            dataset, params = make_random_instance(
                seed, n_users=5, n_items=6, n_labels=4, n_links=15)
            stepped = em_step(params, dataset)
            assert validate_params(stepped, tol=1e-9) == []

    def test_matches_dense_reference(self):
        for seed in range(20):
            dataset, params = make_random_instance(
                seed, n_users=4, n_items=4, n_user_groups=2, n_item_groups=2,
                n_labels=3, n_links=12)
            stepped = em_step(params, dataset)
            ref_theta, ref_eta, ref_p = ref_em_step(
                params.theta, params.eta, params.p, links_of(dataset))
            np.testing.assert_allclose(stepped.theta, ref_theta, atol=1e-12)
            np.testing.assert_allclose(stepped.eta, ref_eta, atol=1e-12)
            np.testing.assert_allclose(stepped.p, ref_p, atol=1e-12)


class TestLogLikelihood:
    def test_single_group_closed_form(self):
        scale = scale_from_values([1, 2, 3])
        ds = dataset_from_triples(
            [("a", "w", 1), ("a", "x", 1), ("b", "y", 2), ("b", "z", 3)],
            scale)
        params = ModelParams(
            theta=np.ones((2, 1)),
            eta=np.ones((4, 1)),
            p=np.array([[[0.5, 0.25, 0.25]]]),
        )
        # 2*log(1/2) + log(1/4) + log(1/4) = log(1/64)
        assert log_likelihood(params, ds) == pytest.approx(
            -4.1588830833596715, abs=1e-12)

    def test_perfect_deterministic_model_scores_zero(self, scale5):
        ds = dataset_from_triples([("a", "x", 2), ("b", "x", 2)], scale5)
        p = np.zeros((1, 1, 5))
        p[0, 0, 1] = 1.0
        params = ModelParams(theta=np.ones((2, 1)), eta=np.ones((1, 1)), p=p)
        assert log_likelihood(params, ds) == 0.0

    def test_matches_brute_force(self):
        for seed in range(20):
            dataset, params = make_random_instance(
                seed, n_users=4, n_items=4, n_labels=3, n_links=10)
            got = log_likelihood(params, dataset)
            want = ref_log_likelihood(params.theta, params.eta, params.p,
                                      links_of(dataset))
            assert got == pytest.approx(want, abs=1e-12)
            assert got <= 0.0

    def test_degenerate_support_raises(self, scale5):
        ds = dataset_from_triples([("a", "x", 1)], scale5)
        p = np.zeros((1, 1, 5))
        p[0, 0, 4] = 1.0
        params = ModelParams(theta=np.ones((1, 1)), eta=np.ones((1, 1)), p=p)
        with pytest.raises(DegenerateSupportError):
            log_likelihood(params, ds)


class TestFit:
    def test_trace_is_monotone_and_iterates_valid(self, toy_dataset):
        result = fit(toy_dataset, FitConfig(2, 2, max_iterations=50, seed=7))
        trace = result.log_likelihood_trace
        assert len(trace) == result.iterations_run + 1
        drops = np.diff(trace) < -1e-9 * np.abs(trace[:-1])
        assert not drops.any()
        assert validate_params(result.params, tol=1e-9) == []

    def test_stops_when_change_below_tol(self):
        scale = scale_from_values([1, 2])
        ds = dataset_from_triples(
            [("a", "x", 1), ("a", "y", 2), ("b", "x", 1), ("b", "y", 2)],
            scale)
        result = fit(ds, FitConfig(1, 1, max_iterations=50, tol=1e-6, seed=0))
        # one update reaches the single-group fixed point; the stall is
        # visible once the next iteration reproduces its likelihood
        assert result.converged
        assert result.iterations_run == 3
        trace = result.log_likelihood_trace
        assert trace[-1] == trace[-2]

    def test_deterministic_given_seed(self, toy_dataset):
        a = fit(toy_dataset, FitConfig(2, 2, max_iterations=30, seed=42))
        b = fit(toy_dataset, FitConfig(2, 2, max_iterations=30, seed=42))
        assert np.array_equal(a.params.theta, b.params.theta)
        assert np.array_equal(a.params.eta, b.params.eta)
        assert np.array_equal(a.params.p, b.params.p)
        assert np.array_equal(a.log_likelihood_trace, b.log_likelihood_trace)

    def test_different_seeds_differ(self, toy_dataset):
        a = fit(toy_dataset, FitConfig(2, 2, max_iterations=30, seed=1))
        b = fit(toy_dataset, FitConfig(2, 2, max_iterations=30, seed=2))
        assert not np.array_equal(a.params.theta, b.params.theta)

    def test_iteration_cap_respected(self, toy_dataset):
        result = fit(toy_dataset, FitConfig(3, 3, max_iterations=5,
                                            tol=1e-15, seed=0))
        assert result.iterations_run == 5
        assert not result.converged
