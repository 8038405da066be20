import math
import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy import stats

from core.exceptions import DimensionMismatch

from .generators import (
    gamma_coefficient, gamma_coefficients, generate_params_highdim, generate_params_lowdim,
    incoherence, sample_dataset,
)
from .io import DatasetFormatError, read_dataset, read_truth, truth_path, write_dataset, write_truth
from .specs import Dataset, LinkKind, LinkSpec, ModelKind, ModelSpec, ParamSet


class LinkSpecTests(SimpleTestCase):
    def test_parse_names_and_aliases(self):
        self.assertEqual(LinkSpec.parse('cubic').kind, LinkKind.CUBIC)
        self.assertEqual(LinkSpec.parse('H1').kind, LinkKind.CUBIC_EXP)
        self.assertEqual(LinkSpec.parse('h2').kind, LinkKind.CUBIC_SIN)
        self.assertEqual(LinkSpec.parse('h3').kind, LinkKind.CUBIC_TANH)
        with self.assertRaises(ValidationError):
            LinkSpec.parse('quartic')

    def test_formulas(self):
        u = np.array([0.0, 2.0])
        np.testing.assert_array_equal(LinkSpec(LinkKind.CUBIC)(u), [0.0, 8.0])
        np.testing.assert_allclose(LinkSpec(LinkKind.CUBIC_EXP)(u), [10.0, 8.0 + 10.0 * math.exp(-4.0)])
        np.testing.assert_allclose(LinkSpec(LinkKind.CUBIC_SIN)(u), [0.0, 8.0 + 5.0 * math.sin(8.0)])
        np.testing.assert_allclose(LinkSpec(LinkKind.CUBIC_TANH)(u), [0.0, 8.0 + 10.0 * math.tanh(4.0)])


class GammaCoefficientTests(SimpleTestCase):
    def test_every_link_has_gamma_six(self):
        for kind in LinkKind:
            self.assertAlmostEqual(gamma_coefficient(LinkSpec(kind)), 6.0, delta=1e-6)

    def test_quadrature_agrees_with_monte_carlo(self):
        xi = np.random.default_rng(21).standard_normal(1_000_000)
        weight = xi ** 3 - 3.0 * xi
        for kind in LinkKind:
            link = LinkSpec(kind)
            samples = link(xi) * weight
            stderr = samples.std(ddof=1) / math.sqrt(xi.size)
            self.assertLessEqual(abs(samples.mean() - gamma_coefficient(link)), 4.0 * stderr)

    def test_one_gamma_per_component(self):
        spec = ModelSpec.uniform(ModelKind.DISCORDANT, 4, 3, 'h1')
        np.testing.assert_allclose(gamma_coefficients(spec), [6.0] * 3, atol=1e-6)


class ModelSpecTests(SimpleTestCase):
    def test_defaults(self):
        spec = ModelSpec.uniform('mixture', 5, 4, 'cubic')
        self.assertEqual(spec.model_kind, ModelKind.MIXTURE)
        self.assertAlmostEqual(spec.noise_sd, 0.5)
        self.assertEqual(spec.weights, (0.25,) * 4)
        discordant = ModelSpec.uniform('discordant', 5, 4, 'cubic')
        self.assertIsNone(discordant.weights)
        np.testing.assert_array_equal(discordant.population_weights(), [0.25] * 4)

    def test_invalid_specs(self):
        with self.assertRaises(ValidationError):
            ModelSpec.uniform('hybrid', 5, 2, 'cubic')
        with self.assertRaises(ValidationError):
            ModelSpec.uniform('mixture', 5, 2, 'cubic', weights=(0.7, 0.7))
        with self.assertRaises(ValidationError):
            ModelSpec.uniform('discordant', 5, 2, 'cubic', noise_sd=-1.0)
        with self.assertRaises(ValidationError):
            ModelSpec('discordant', 5, 2, (LinkSpec.parse('cubic'),))


class ParamSetTests(SimpleTestCase):
    def test_columns_must_be_unit(self):
        with self.assertRaises(ValidationError):
            ParamSet(np.array([[1.0], [1.0]]))

    def test_sparsity_is_checked(self):
        B = np.full((4, 1), 0.5)
        self.assertEqual(ParamSet(B, s=4).k, 1)
        with self.assertRaises(ValidationError):
            ParamSet(B, s=3)

    def test_dataset_shape_and_finiteness(self):
        with self.assertRaises(ValidationError):
            Dataset(np.zeros((3, 2)), np.zeros(2))
        with self.assertRaises(ValidationError):
            Dataset(np.array([[np.inf, 0.0]]), np.zeros(1))


class GeneratorTests(SimpleTestCase):
    def test_lowdim_params_are_unit_and_incoherent(self):
        rng = np.random.default_rng(1)
        params = generate_params_lowdim(20, 5, 0.1, rng)
        np.testing.assert_allclose(np.linalg.norm(params.B, axis=0), 1.0, atol=1e-12)
        self.assertLessEqual(incoherence(params), 2.0 / math.sqrt(20))
        with self.assertRaises(ValidationError):
            generate_params_lowdim(3, 4, 0.1, rng)

    def test_highdim_params_use_disjoint_supports(self):
        params = generate_params_highdim(100, 5, 3, 0.1, np.random.default_rng(2))
        supports = [set(np.flatnonzero(params.B[:, j])) for j in range(5)]
        self.assertTrue(all(len(s) <= 3 for s in supports))
        self.assertEqual(supports[0] | supports[1] | supports[2], supports[0])
        self.assertEqual(supports[3] | supports[4], supports[3])
        self.assertFalse(supports[0] & supports[3])
        np.testing.assert_allclose(np.linalg.norm(params.B, axis=0), 1.0, atol=1e-12)

    def test_zero_kappa_gives_orthonormal_columns(self):
        params = generate_params_lowdim(10, 4, 0.0, np.random.default_rng(16))
        np.testing.assert_allclose(params.B.T @ params.B, np.eye(4), atol=1e-14)
        self.assertLessEqual(incoherence(params), 1e-14)

    def test_highdim_grouping_of_seven_columns(self):
        params = generate_params_highdim(100, 7, 3, 0.1, np.random.default_rng(17))
        supports = [frozenset(np.flatnonzero(params.B[:, j])) for j in range(7)]
        groups = [supports[0] | supports[1] | supports[2], supports[3] | supports[4] | supports[5], supports[6]]
        self.assertTrue(all(len(g) == 3 for g in groups))
        self.assertFalse(groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])
        gram = params.B.T @ params.B
        group_of = [0, 0, 0, 1, 1, 1, 2]
        for i in range(7):
            for j in range(7):
                if group_of[i] != group_of[j]:
                    self.assertEqual(gram[i, j], 0.0)

    def test_highdim_supports_must_fit(self):
        with self.assertRaises(ValidationError):
            generate_params_highdim(5, 4, 3)

    def test_noiseless_cubic_response(self):
        spec = ModelSpec.uniform('discordant', 3, 1, 'cubic', noise_sd=0.0)
        params = ParamSet(np.eye(3)[:, :1])
        data = sample_dataset(spec, params, 50, np.random.default_rng(7))
        np.testing.assert_array_equal(data.y, data.X[:, 0] ** 3)

    def test_discordant_averages_components(self):
        spec = ModelSpec.uniform('discordant', 4, 2, 'cubic', noise_sd=0.0)
        params = ParamSet(np.eye(4)[:, :2])
        data = sample_dataset(spec, params, 20, np.random.default_rng(3))
        np.testing.assert_allclose(data.y, (data.X[:, 0] ** 3 + data.X[:, 1] ** 3) / 2, rtol=1e-14)

    def test_mixture_follows_weights(self):
        spec = ModelSpec.uniform('mixture', 4, 2, 'cubic', noise_sd=0.0, weights=(0.0, 1.0))
        params = ParamSet(np.eye(4)[:, :2])
        data = sample_dataset(spec, params, 30, np.random.default_rng(4))
        np.testing.assert_array_equal(data.y, data.X[:, 1] ** 3)

    def test_discordant_cubic_response_has_mean_zero(self):
        spec = ModelSpec.uniform('discordant', 5, 2, 'cubic', noise_sd=0.0)
        params = generate_params_lowdim(5, 2, 0.1, np.random.default_rng(18))
        data = sample_dataset(spec, params, 1_000_000, np.random.default_rng(19))
        self.assertLessEqual(abs(data.y.mean()), 0.02)

    def test_degenerate_mixture_is_the_first_single_index_model(self):
        params = generate_params_lowdim(4, 2, 0.1, np.random.default_rng(20))
        mixture = ModelSpec.uniform('mixture', 4, 2, 'h2', noise_sd=0.5, weights=(1.0, 0.0))
        single = ModelSpec.uniform('discordant', 4, 1, 'h2', noise_sd=0.5)
        y_mixture = sample_dataset(mixture, params, 10_000, np.random.default_rng(21)).y
        y_single = sample_dataset(single, ParamSet(params.B[:, :1]), 10_000, np.random.default_rng(22)).y
        self.assertGreater(stats.ks_2samp(y_mixture, y_single).pvalue, 0.01)

    def test_response_kurtosis_is_stable_in_n(self):
        spec = ModelSpec.uniform('discordant', 10, 5, 'h1')
        params = generate_params_lowdim(10, 5, 0.1, np.random.default_rng(23))
        rng = np.random.default_rng(24)
        small = stats.kurtosis(sample_dataset(spec, params, 10_000, rng).y)
        large = stats.kurtosis(sample_dataset(spec, params, 100_000, rng).y)
        self.assertTrue(np.isfinite(small) and np.isfinite(large))
        self.assertTrue(0.5 <= small / large <= 2.0, (small, large))

    def test_same_seed_same_dataset(self):
        spec = ModelSpec.uniform('mixture', 5, 3, 'h2')
        params = generate_params_lowdim(5, 3, 0.1, np.random.default_rng(5))
        first = sample_dataset(spec, params, 100, np.random.default_rng(6))
        second = sample_dataset(spec, params, 100, np.random.default_rng(6))
        np.testing.assert_array_equal(first.X, second.X)
        np.testing.assert_array_equal(first.y, second.y)

    def test_dimension_mismatch(self):
        spec = ModelSpec.uniform('discordant', 5, 1, 'cubic')
        with self.assertRaises(DimensionMismatch):
            sample_dataset(spec, ParamSet(np.eye(4)[:, :1]), 10)


class DatasetFileTests(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def test_written_dataset_reads_back_exactly(self):
        spec = ModelSpec.uniform('discordant', 3, 2, 'h3')
        params = generate_params_lowdim(3, 2, 0.1, np.random.default_rng(8))
        data = sample_dataset(spec, params, 25, np.random.default_rng(9))
        path = self.dir / 'data.csv'
        write_dataset(data, path)
        self.assertEqual(path.read_text().splitlines()[0], 'x_1,x_2,x_3,y')
        loaded = read_dataset(path)
        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.y, data.y)

    def test_malformed_files(self):
        cases = {
            'empty.csv': '',
            'header.csv': 'a,b,y\n1,2,3\n',
            'short.csv': 'x_1,x_2,y\n1,2\n',
            'text.csv': 'x_1,y\n1,abc\n',
            'norows.csv': 'x_1,y\n',
        }
        for name, text in cases.items():
            path = self.dir / name
            path.write_text(text)
            with self.subTest(name), self.assertRaises(DatasetFormatError):
                read_dataset(path)
        with self.assertRaises(DatasetFormatError):
            read_dataset(self.dir / 'missing.csv')

    def test_row_length_errors_name_the_line(self):
        path = self.dir / 'ragged.csv'
        path.write_text('x_1,x_2,y\n1,2,3\n1,2\n')
        with self.assertRaisesMessage(DatasetFormatError, 'line 3 has 2 fields, expected 3'):
            read_dataset(path)
        path.write_text('x_1,y\n1,2\n\n')
        with self.assertRaisesMessage(DatasetFormatError, 'line 3 is blank'):
            read_dataset(path)

    def test_truth_sidecar(self):
        spec = ModelSpec.uniform('mixture', 6, 2, 'h1', weights=(0.3, 0.7))
        params = generate_params_lowdim(6, 2, 0.1, np.random.default_rng(10))
        path = truth_path(self.dir / 'data.csv')
        self.assertEqual(path.name, 'data.csv.truth.json')
        write_truth(spec, params, path, seed=10)
        loaded_spec, loaded_params = read_truth(path)
        self.assertEqual(loaded_spec.model_kind, ModelKind.MIXTURE)
        self.assertEqual(loaded_spec.weights, (0.3, 0.7))
        np.testing.assert_array_equal(loaded_params.B, params.B)
