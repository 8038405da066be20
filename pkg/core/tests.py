import itertools

import numpy as np
from django.test import SimpleTestCase, tag

from .exceptions import DimensionMismatch
from .score import score1, score2, score3, score3_contract
from .tensors import (
    SymTensor3, TensorOperator, enumerated_sparse_norm, eval_batch, operator_norm_estimate,
    sparse_operator_norm_estimate, spherical_grid_norm, truncate_columns,
)


def random_symmetric(d, rng, terms=4):
    T = SymTensor3.zeros(d)
    for _ in range(terms):
        T.rank1_accumulate(rng.standard_normal(), rng.standard_normal(d))
    return T


class SymTensor3Tests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_zeros_rejects_empty_dimension(self):
        with self.assertRaises(ValueError):
            SymTensor3.zeros(0)

    def test_rank1_contraction(self):
        e1 = np.eye(5)[0]
        T = SymTensor3.rank1(6.0, e1)
        self.assertEqual(T[0, 0, 0], 6.0)
        self.assertEqual(np.count_nonzero(T.entries), 1)
        np.testing.assert_array_equal(T.contract2(e1, e1), 6.0 * e1)
        self.assertEqual(T.eval3(e1, e1, e1), 6.0)

    def test_accumulation_keeps_exact_symmetry(self):
        T = random_symmetric(6, self.rng, terms=10)
        for axes in itertools.permutations(range(3)):
            np.testing.assert_array_equal(T.entries, T.entries.transpose(axes))

    def test_from_array_validation(self):
        with self.assertRaises(DimensionMismatch):
            SymTensor3.from_array(np.zeros((2, 3, 3)))
        asym = np.zeros((3, 3, 3))
        asym[0, 1, 2] = 1.0
        with self.assertRaises(ValueError):
            SymTensor3.from_array(asym)
        bad = np.zeros((2, 2, 2))
        bad[0, 0, 0] = np.nan
        with self.assertRaises(ValueError):
            SymTensor3.from_array(bad)

    def test_from_array_accepts_near_symmetry_within_atol(self):
        T = random_symmetric(4, self.rng)
        noisy = T.entries + 1e-13 * self.rng.standard_normal((4, 4, 4))
        S = SymTensor3.from_array(noisy, atol=1e-11)
        np.testing.assert_array_equal(S.entries, S.entries.transpose(2, 0, 1))

    def test_entries_are_read_only(self):
        T = SymTensor3.zeros(3)
        with self.assertRaises(ValueError):
            T.entries[0, 0, 0] = 1.0

    def test_copy_is_independent(self):
        T = random_symmetric(3, self.rng)
        C = T.copy()
        T.rank1_accumulate(1.0, np.ones(3))
        self.assertFalse(np.array_equal(T.entries, C.entries))

    def test_contract2_matches_einsum(self):
        T = random_symmetric(7, self.rng)
        u, v = self.rng.standard_normal(7), self.rng.standard_normal(7)
        expected = np.einsum('ijk,j,k->i', T.entries, u, v)
        np.testing.assert_allclose(T.contract2(u, v), expected, rtol=0, atol=1e-12)

    def test_contract2_is_linear(self):
        A, B = random_symmetric(6, self.rng), random_symmetric(6, self.rng)
        u, v = self.rng.standard_normal(6), self.rng.standard_normal(6)
        a, b = 1.7, -0.4
        combined = (a * A + b * B).contract2(u, v)
        expected = a * A.contract2(u, v) + b * B.contract2(u, v)
        self.assertLessEqual(np.linalg.norm(combined - expected), 1e-12 * np.linalg.norm(expected))
        np.testing.assert_array_equal(A.contract2(np.zeros(6), v), np.zeros(6))

    def test_eval3_is_invariant_under_argument_order(self):
        T = random_symmetric(5, self.rng)
        vectors = [self.rng.standard_normal(5) for _ in range(3)]
        base = T.eval3(*vectors)
        for order in itertools.permutations(vectors):
            self.assertLessEqual(abs(T.eval3(*order) - base), 1e-12 * abs(base))

    def test_hand_evaluated_two_term_tensor(self):
        T = SymTensor3.rank1(6.0, np.eye(2)[0]).rank1_accumulate(5.0, np.eye(2)[1])
        u = np.ones(2) / np.sqrt(2.0)
        np.testing.assert_allclose(T.contract2(u, u), [3.0, 2.5], rtol=1e-15)
        self.assertAlmostEqual(T.eval3(u, u, u), 11.0 * 2 ** -1.5, places=12)

    def test_contract2_dimension_mismatch(self):
        T = SymTensor3.zeros(4)
        with self.assertRaises(DimensionMismatch):
            T.contract2(np.ones(3), np.ones(4))

    def test_contract_batch_dense_and_sparse_paths(self):
        T = random_symmetric(20, self.rng)
        U = self.rng.standard_normal((20, 6))
        for sparse in (False, True):
            V = truncate_columns(U, 3) if sparse else U
            batch = T.contract_batch(V)
            for col in range(V.shape[1]):
                np.testing.assert_allclose(batch[:, col], T.contract2(V[:, col], V[:, col]), atol=1e-11)

    def test_unique_entries_cover_sorted_triples(self):
        T = random_symmetric(4, self.rng)
        rows = list(T.unique_entries())
        self.assertEqual(len(rows), 4 * 5 * 6 // 6)
        for i, j, k, value in rows:
            self.assertTrue(i <= j <= k)
            self.assertEqual(value, T[k, i, j])

    def test_arithmetic(self):
        A = random_symmetric(3, self.rng)
        B = random_symmetric(3, self.rng)
        np.testing.assert_array_equal((A - A).entries, np.zeros((3, 3, 3)))
        np.testing.assert_array_equal((A + B).entries, A.entries + B.entries)
        np.testing.assert_array_equal((2 * A).entries, 2.0 * A.entries)
        np.testing.assert_array_equal((-A).entries, -A.entries)
        with self.assertRaises(DimensionMismatch):
            A + SymTensor3.zeros(4)

    def test_implements_operator_protocol(self):
        self.assertIsInstance(SymTensor3.zeros(2), TensorOperator)


class TruncationTests(SimpleTestCase):
    def test_keeps_largest_entries_lower_index_on_ties(self):
        U = np.array([[1.0, 0.1], [-1.0, -3.0], [0.5, 2.0]])
        out = truncate_columns(U, 1)
        np.testing.assert_array_equal(out, [[1.0, 0.0], [0.0, -3.0], [0.0, 0.0]])

    def test_r_equal_d_is_identity(self):
        U = np.random.default_rng(0).standard_normal((5, 3))
        np.testing.assert_array_equal(truncate_columns(U, 5), U)


class OperatorNormTests(SimpleTestCase):
    def test_rank1_norm(self):
        u = np.array([3.0, 4.0]) / 5.0
        for c in (6.0, -6.0):
            T = SymTensor3.rank1(c, u)
            self.assertAlmostEqual(operator_norm_estimate(T, 10, 20, np.random.default_rng(1)), 6.0, places=12)
            self.assertAlmostEqual(spherical_grid_norm(T), 6.0, places=8)

    def test_orthogonal_sum_norm_is_largest_weight(self):
        T = SymTensor3.zeros(4)
        for weight, e in zip((1.0, -3.0, 2.0), np.eye(4)):
            T.rank1_accumulate(weight, e)
        self.assertAlmostEqual(operator_norm_estimate(T, 30, 100, np.random.default_rng(2)), 3.0, places=10)

    def test_estimate_agrees_with_the_grid_norm(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            T = random_symmetric(3, rng)
            exact = spherical_grid_norm(T)
            self.assertAlmostEqual(operator_norm_estimate(T, 50, 100, rng), exact, delta=1e-3)

    def test_estimate_dominates_sampled_values(self):
        rng = np.random.default_rng(13)
        T = random_symmetric(6, rng)
        estimate = operator_norm_estimate(T, 50, 100, rng)
        U = rng.standard_normal((6, 500))
        U /= np.linalg.norm(U, axis=0)
        self.assertGreaterEqual(estimate, float(np.abs(eval_batch(T, U)).max()))
        self.assertEqual(operator_norm_estimate(SymTensor3.zeros(4), 3, 3, rng), 0.0)

    def test_sparse_estimate_with_r_equal_d_reduces_to_dense(self):
        T = random_symmetric(5, np.random.default_rng(4))
        dense = operator_norm_estimate(T, 20, 50, np.random.default_rng(9))
        sparse = sparse_operator_norm_estimate(T, 5, 20, 50, np.random.default_rng(9))
        self.assertEqual(dense, sparse)

    def test_sparse_estimate_rejects_bad_r(self):
        with self.assertRaises(ValueError):
            sparse_operator_norm_estimate(SymTensor3.zeros(3), 4, 5, 5)

    def test_one_sparse_norm_is_largest_diagonal(self):
        T = random_symmetric(6, np.random.default_rng(5))
        diagonal = np.abs([T[i, i, i] for i in range(6)])
        self.assertAlmostEqual(enumerated_sparse_norm(T, 1), float(diagonal.max()), places=12)

    def test_grid_oracle_limits(self):
        with self.assertRaises(ValueError):
            spherical_grid_norm(SymTensor3.zeros(4))
        with self.assertRaises(ValueError):
            enumerated_sparse_norm(SymTensor3.zeros(13), 2)

    def test_eval_batch(self):
        T = random_symmetric(4, np.random.default_rng(6))
        U = np.random.default_rng(7).standard_normal((4, 3))
        values = eval_batch(T, U)
        for col in range(3):
            u = U[:, col]
            self.assertAlmostEqual(values[col], T.eval3(u, u, u), places=12)


class ScoreTests(SimpleTestCase):
    def test_first_and_second_scores(self):
        x = np.array([2.0, -1.0])
        s1 = score1(x)
        np.testing.assert_array_equal(s1, x)
        s1[0] = 0.0
        self.assertEqual(x[0], 2.0)
        np.testing.assert_array_equal(score2(x), [[3.0, -2.0], [-2.0, 0.0]])

    def test_univariate_third_score_is_he3(self):
        for x in np.arange(-3.0, 3.5, 0.5):
            self.assertEqual(score3(np.array([x]))[0, 0, 0], x ** 3 - 3 * x)

    def test_hand_computed_entries(self):
        S = score3(np.array([2.0, 1.0]))
        self.assertEqual(S[0, 0, 0], 2.0)
        self.assertEqual(S[0, 0, 1], 3.0)
        self.assertEqual(S[1, 0, 0], 3.0)
        self.assertEqual(S[0, 1, 1], 0.0)
        self.assertEqual(S[1, 1, 1], -2.0)

    def test_closed_form_contraction_matches_dense(self):
        rng = np.random.default_rng(8)
        for d in (2, 5, 20):
            for _ in range(1000 if d < 20 else 200):
                x, u = rng.standard_normal(d), rng.standard_normal(d)
                dense = score3(x).contract2(u, u)
                tolerance = 1e-10 * (1 + np.linalg.norm(x) ** 3)
                self.assertLessEqual(np.linalg.norm(score3_contract(x, u) - dense), tolerance)

    @tag('slow')
    def test_second_score_has_mean_zero(self):
        X = np.random.default_rng(14).standard_normal((1_000_000, 3))
        total = np.zeros((3, 3))
        for x in X:
            total += score2(x)
        self.assertLessEqual(np.abs(total / X.shape[0]).max(), 0.01)

    @tag('slow')
    def test_second_score_stein_identity(self):
        # f(t) = t^2 has f'' = 2, so E[f(<b, X>) S2(X)] = 2 b b^T
        beta = np.array([0.6, 0.0, 0.8])
        X = np.random.default_rng(15).standard_normal((200_000, 3))
        total = np.zeros((3, 3))
        for x in X:
            total += (x @ beta) ** 2 * score2(x)
        np.testing.assert_allclose(total / X.shape[0], 2.0 * np.outer(beta, beta), atol=0.1)
