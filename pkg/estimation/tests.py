import itertools
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings, tag

from core.exceptions import DegenerateIterate, DegenerateOperator, DimensionMismatch, MemoryGuardExceeded
from core.score import score3
from core.tensors import SymTensor3, TensorOperator, operator_norm_estimate
from simulation.generators import generate_params_highdim, generate_params_lowdim, sample_dataset
from simulation.specs import Dataset, ModelSpec, ParamSet

from .decomposition import (
    PowerConfig, cluster_candidates, decompose, power_step, run_power_candidates, truncate_normalize,
)
from .metrics import (
    SQRT2, distance_matrix, inverse_signal_strength_highdim, inverse_signal_strength_lowdim,
    matching_error, sign_flip_distance, theoretical_error_bound,
)
from .moments import (
    ImplicitMoment, build_moment_tensor_dense, implicit_contract, moment_error_norm, moment_operator,
    population_moment, population_tensor,
)


def orthonormal_params(d, k, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, k)))
    return ParamSet(q / np.linalg.norm(q, axis=0))


def random_dataset(n, d, seed):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, d)), rng.standard_normal(n))


class MomentTests(SimpleTestCase):
    def test_single_sample_is_scaled_score(self):
        x = np.array([0.3, -1.2, 2.0])
        M = build_moment_tensor_dense(Dataset(x[None, :], [1.5]))
        np.testing.assert_allclose(M.entries, 1.5 * score3(x).entries, atol=1e-12)

    def test_implicit_matches_dense(self):
        data = random_dataset(500, 10, 1)
        dense = build_moment_tensor_dense(data)
        implicit = ImplicitMoment(data)
        rng = np.random.default_rng(2)
        for _ in range(100):
            u, v = rng.standard_normal(10), rng.standard_normal(10)
            expected = dense.contract2(u, v)
            got = implicit_contract(implicit, u, v)
            self.assertLessEqual(np.linalg.norm(got - expected), 1e-10 * np.linalg.norm(expected))

    def test_implicit_batch_matches_single_contractions(self):
        implicit = ImplicitMoment(random_dataset(300, 6, 3))
        U = np.random.default_rng(4).standard_normal((6, 5))
        batch = implicit.contract_batch(U)
        for col in range(5):
            np.testing.assert_allclose(batch[:, col], implicit.contract2(U[:, col], U[:, col]), atol=1e-12)
        self.assertIsInstance(implicit, TensorOperator)

    def test_dense_build_is_independent_of_blocks_and_threads(self):
        data = random_dataset(257, 5, 5)
        serial = build_moment_tensor_dense(data, jobs=1, block_rows=16)
        threaded = build_moment_tensor_dense(data, jobs=4, block_rows=16)
        np.testing.assert_array_equal(serial.entries, threaded.entries)
        for axes in itertools.permutations(range(3)):
            np.testing.assert_array_equal(serial.entries, serial.entries.transpose(axes))

    @override_settings(AIM_DENSE_MAX_D=2)
    def test_dense_guard(self):
        with self.assertRaises(MemoryGuardExceeded):
            build_moment_tensor_dense(random_dataset(10, 3, 6))

    def test_operator_modes(self):
        small_n = random_dataset(20, 5, 7)
        large_n = random_dataset(30, 5, 8)
        self.assertIsInstance(moment_operator(large_n), ImplicitMoment)
        self.assertIsInstance(moment_operator(small_n, 'auto'), ImplicitMoment)
        self.assertIsInstance(moment_operator(large_n, 'auto'), SymTensor3)
        self.assertIsInstance(moment_operator(small_n, 'dense'), SymTensor3)
        with self.assertRaises(ValueError):
            moment_operator(small_n, 'sparse')

    def test_population_tensor(self):
        params = orthonormal_params(4, 2, 9)
        T = population_tensor(params, [6.0, 6.0], [0.5, 0.5])
        b = params.columns[0]
        self.assertAlmostEqual(T.eval3(b, b, b), 3.0, places=12)
        with self.assertRaises(DimensionMismatch):
            population_tensor(params, [6.0], [1.0])

    def test_population_moment_uses_link_gammas(self):
        spec = ModelSpec.uniform('discordant', 3, 1, 'cubic')
        params = ParamSet(np.eye(3)[:, :1])
        self.assertAlmostEqual(population_moment(spec, params)[0, 0, 0], 6.0, places=9)

    def test_error_norm_dimension_check(self):
        with self.assertRaises(DimensionMismatch):
            moment_error_norm(SymTensor3.zeros(3), SymTensor3.zeros(4), restarts=2, iters=2)

    def test_sparse_error_is_at_most_the_full_error(self):
        spec = ModelSpec.uniform('discordant', 12, 2, 'cubic')
        sparse, full = [], []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            params = generate_params_highdim(12, 2, 3, 0.1, rng)
            data = sample_dataset(spec, params, 2000, rng)
            empirical, population = build_moment_tensor_dense(data), population_moment(spec, params)
            sparse.append(moment_error_norm(empirical, population, r=3, restarts=20, iters=30, rng=rng))
            full.append(moment_error_norm(empirical, population, restarts=20, iters=30, rng=rng))
        self.assertLessEqual(np.median(sparse), np.median(full))

    @tag('slow')
    def test_error_shrinks_when_n_quadruples_for_every_link(self):
        params = orthonormal_params(5, 2, 13)
        for link in ('cubic', 'h1', 'h2', 'h3'):
            spec = ModelSpec.uniform('discordant', 5, 2, link)
            population = population_moment(spec, params)
            medians = []
            for n in (200_000, 800_000):
                errors = []
                for seed in range(10):
                    rng = np.random.default_rng([seed, n])
                    data = sample_dataset(spec, params, n, rng)
                    errors.append(moment_error_norm(build_moment_tensor_dense(data), population, rng=rng))
                medians.append(np.median(errors))
            self.assertLess(medians[1], medians[0], link)

    @tag('slow')
    def test_empirical_moment_concentrates_around_population(self):
        # tolerance allows for the heavy tails of y S3(x) under the cubic link
        spec = ModelSpec.uniform('discordant', 5, 1, 'cubic', noise_sd=0.0)
        params = ParamSet(np.eye(5)[:, :1])
        population = population_moment(spec, params)
        for seed in (101, 202, 303):
            rng = np.random.default_rng(seed)
            data = sample_dataset(spec, params, 200_000, rng)
            error = moment_error_norm(build_moment_tensor_dense(data), population, rng=rng)
            self.assertLessEqual(error, 0.8)

    @tag('slow')
    def test_third_score_has_mean_zero(self):
        rng = np.random.default_rng(12)
        data = Dataset(rng.standard_normal((1_000_000, 5)), np.ones(1_000_000))
        M = build_moment_tensor_dense(data)
        self.assertLessEqual(operator_norm_estimate(M, rng=rng), 0.02)


class PowerStepTests(SimpleTestCase):
    def setUp(self):
        self.M = SymTensor3.rank1(6.0, np.eye(4)[0])
        self.M.rank1_accumulate(2.0, np.eye(4)[1])
        u = np.array([0.5, 0.5, 0.5, 0.5])
        self.u = u

    def test_rejects_non_unit_start(self):
        with self.assertRaises(ValueError):
            power_step(self.M, 2 * self.u)

    def test_zero_contraction(self):
        with self.assertRaises(DegenerateIterate):
            power_step(SymTensor3.zeros(4), self.u)

    def test_scale_invariance(self):
        base = power_step(self.M, self.u)
        np.testing.assert_allclose(power_step(3.0 * self.M, self.u), base, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(power_step(-self.M, self.u), -base)

    def test_truncate_normalize(self):
        v = truncate_normalize(np.array([3.0, -4.0, 1.0, 2.0]), 2)
        np.testing.assert_array_equal(v, [0.6, -0.8, 0.0, 0.0])
        with self.assertRaises(ValueError):
            truncate_normalize(np.ones(3), 4)
        with self.assertRaises(DegenerateIterate):
            truncate_normalize(np.zeros(3), 1)


class DecompositionTests(SimpleTestCase):
    def test_exact_rank1_recovery(self):
        e1 = np.eye(5)[0]
        result = decompose(SymTensor3.rank1(6.0, e1), PowerConfig(L=10, N=50, k=1, seed=1))
        self.assertEqual(result.k, 1)
        self.assertFalse(result.exhausted)
        self.assertLessEqual(sign_flip_distance(result.components[0], e1), 1e-10)
        self.assertLessEqual(abs(result.weights[0] - 6.0), 1e-10)

    def test_exact_orthogonal_decomposition(self):
        params = orthonormal_params(10, 4, 2)
        M = population_tensor(params, [6.0] * 4, [0.25] * 4)
        result = decompose(M, PowerConfig(L=100, N=100, k=4, seed=3))
        self.assertLessEqual(matching_error(result.components, params), 1e-8)
        np.testing.assert_allclose(np.abs(result.weights), 1.5, atol=1e-8)

    def test_truncated_recovery_of_sparse_component(self):
        beta = np.zeros(30)
        beta[[4, 17, 22]] = [0.6, -0.48, 0.64]
        M = SymTensor3.rank1(6.0, beta)
        result = decompose(M, PowerConfig(L=20, N=30, k=1, truncation=3, seed=4))
        self.assertLessEqual(sign_flip_distance(result.components[0], beta), 1e-10)
        self.assertEqual(np.count_nonzero(result.components[0]), 3)

    def test_pool_exhausts_on_rank1_tensor(self):
        M = SymTensor3.rank1(6.0, np.eye(4)[2])
        result = decompose(M, PowerConfig(L=15, N=20, k=3, seed=5))
        self.assertTrue(result.exhausted)
        self.assertEqual(result.k, 1)
        self.assertEqual(result.candidates_used, 15)

    def test_residual_shrinks_monotonically_near_a_component(self):
        gammas = (6.0, 5.5, 5.0, 4.5)
        M = SymTensor3.zeros(8)
        for gamma, e in zip(gammas, np.eye(8)):
            M.rank1_accumulate(gamma, e)
        basis = np.eye(8)[:, :4]
        rng = np.random.default_rng(14)
        for _ in range(100):
            u = rng.standard_normal(8)
            u /= np.linalg.norm(u)
            distances = []
            for _ in range(30):
                u = power_step(M, u)
                distances.append(min(sign_flip_distance(u, basis[:, j]) for j in range(4)))
            close = [i for i, dist in enumerate(distances) if dist < 0.5]
            if close:
                tail = distances[close[0]:]
                for before, after in zip(tail, tail[1:]):
                    self.assertLessEqual(after, before + 1e-12)

    def test_zero_tensor_degenerates(self):
        with self.assertRaises(DegenerateOperator):
            decompose(SymTensor3.zeros(3), PowerConfig(L=4, N=5, k=1, max_redraws=2))

    def test_same_seed_same_components(self):
        data = sample_dataset(
            ModelSpec.uniform('discordant', 6, 2, 'h1'),
            generate_params_lowdim(6, 2, 0.1, np.random.default_rng(6)),
            2000, np.random.default_rng(7),
        )
        M = ImplicitMoment(data)
        config = PowerConfig(L=12, N=15, k=2, seed=8)
        first, second = decompose(M, config), decompose(M, config)
        for a, b in zip(first.components, second.components):
            np.testing.assert_array_equal(a, b)

    def test_explicit_initializations(self):
        M = SymTensor3.rank1(6.0, np.eye(3)[1])
        init = [np.eye(3)[1], np.array([0.6, 0.8, 0.0])]
        candidates = run_power_candidates(M, PowerConfig(L=2, N=3, k=1, init=init))
        self.assertEqual(len(candidates), 2)
        for c in candidates:
            self.assertLessEqual(sign_flip_distance(c, np.eye(3)[1]), 1e-12)

    def test_cluster_removes_sign_flipped_duplicates(self):
        M = SymTensor3.rank1(6.0, np.eye(3)[0])
        M.rank1_accumulate(3.0, np.eye(3)[1])
        pool = [np.eye(3)[0], -np.eye(3)[0], np.eye(3)[1]]
        result = cluster_candidates(M, pool, k=2, N=5)
        np.testing.assert_allclose(np.abs(result.components[0]), np.eye(3)[0])
        np.testing.assert_allclose(np.abs(result.components[1]), np.eye(3)[1])
        self.assertAlmostEqual(result.weights[0], 6.0)
        self.assertEqual(result.candidates_used, 3)

    def test_convergence_trace(self):
        M = SymTensor3.rank1(6.0, np.eye(3)[0])
        result = decompose(M, PowerConfig(L=5, N=10, k=1, seed=9, track_convergence=True))
        self.assertTrue(result.convergence)
        self.assertLessEqual(result.convergence[-1], 1e-12)

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            PowerConfig(L=2, N=10, k=3)
        with self.assertRaises(ValidationError):
            PowerConfig(L=4, N=0, k=1)
        with self.assertRaises(ValidationError):
            PowerConfig(L=2, N=1, k=1, init=[np.ones(3) / math.sqrt(3)])
        with self.assertRaises(ValidationError):
            decompose(SymTensor3.zeros(3), PowerConfig(L=2, N=1, k=1, truncation=4))


class MetricTests(SimpleTestCase):
    def test_sign_flip_distance(self):
        u = np.array([0.6, 0.8])
        self.assertEqual(sign_flip_distance(u, -u), 0.0)
        self.assertAlmostEqual(sign_flip_distance(u, np.array([-0.8, 0.6])), SQRT2)
        with self.assertRaises(DimensionMismatch):
            sign_flip_distance(u, np.array([1.0, 0.0, 0.0]))
        with self.assertRaises(ValueError):
            sign_flip_distance(u, np.array([1.0, 1.0]))

    def test_matching_is_permutation_and_sign_invariant(self):
        params = orthonormal_params(6, 4, 10)
        estimates = [-params.columns[2], params.columns[0], params.columns[3], -params.columns[1]]
        self.assertEqual(matching_error(estimates, params), 0.0)

    def test_matching_equals_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            params = orthonormal_params(5, 4, int(rng.integers(1000)))
            estimates = [u / np.linalg.norm(u) for u in rng.standard_normal((4, 5))]
            D = distance_matrix(estimates, params.B)
            brute = min(max(D[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4)))
            self.assertEqual(matching_error(estimates, params), brute)

    def test_missing_estimates(self):
        params = orthonormal_params(5, 3, 12)
        with self.assertRaises(ValueError):
            matching_error(params.columns[:2], params)
        self.assertEqual(matching_error(params.columns[:2], params, allow_missing=True), SQRT2)

    def test_surplus_estimates(self):
        params = orthonormal_params(6, 2, 15)
        rng = np.random.default_rng(16)
        extra = rng.standard_normal(6)
        estimates = [extra / np.linalg.norm(extra), -params.columns[1], params.columns[0]]
        with self.assertRaises(ValueError):
            matching_error(estimates, params)
        self.assertEqual(matching_error(estimates, params, allow_extra=True), 0.0)
        for _ in range(20):
            estimates = [u / np.linalg.norm(u) for u in rng.standard_normal((4, 6))]
            D = distance_matrix(estimates, params.B)
            brute = min(max(D[p[0], 0], D[p[1], 1]) for p in itertools.permutations(range(4), 2))
            self.assertEqual(matching_error(estimates, params, allow_extra=True), brute)

    def test_unmatched_direction_scores_sqrt2(self):
        truth = ParamSet(np.eye(3)[:, [0, 2]])
        self.assertAlmostEqual(matching_error([np.eye(3)[0], np.eye(3)[1]], truth), SQRT2)

    def test_matching_is_limited_to_ten_components(self):
        params = orthonormal_params(12, 11, 17)
        with self.assertRaises(ValueError):
            matching_error(params.columns, params)

    def test_rate_axes(self):
        self.assertAlmostEqual(inverse_signal_strength_lowdim(10, 1000), 10 ** 2.5 / 1000)
        self.assertAlmostEqual(inverse_signal_strength_lowdim(4, 10 ** 6), 0.002)
        base = 3 * math.log(100)
        self.assertAlmostEqual(inverse_signal_strength_highdim(3, 100, 10 ** 5), math.sqrt(base / 10 ** 5))
        base = 3 * math.log(100 / 9)
        self.assertAlmostEqual(inverse_signal_strength_highdim(3, 100, 10 ** 5, r=9), math.sqrt(base / 10 ** 5))

    def test_theoretical_bound(self):
        value = theoretical_error_bound(0.1, 6.0, 6.0, 4, 0.05)
        self.assertAlmostEqual(value, 0.0968963, places=6)
        with self.assertRaises(ValueError):
            theoretical_error_bound(0.1, 0.0, 6.0, 4, 0.05)
