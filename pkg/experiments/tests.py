import csv
import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag

from core.exceptions import DegenerateOperator, DimensionMismatch
from simulation.io import read_dataset

from .decorators import INVALID_INPUT, RUNTIME_FAILURE, exit_codes
from .forms import ExperimentPlanForm, SimulateConfigForm
from .plans import ConcentrationRecord, ExperimentPlan, TrialRecord
from .runner import run_plan
from .seeding import splitmix64, trial_seed
from .signals import trial_completed

TRIALS_HEADER = 'trial_id,model,link,d,k,s,s_bar,n,seed,error,inv_signal,psi,wall_ms,exhausted'

SIMULATE_EXAMPLE = {
    'model_kind': 'discordant',
    'link': 'cubic',
    'd': 3,
    'k': 1,
    'n': 5,
    'noise_sd': 0.0,
    'seed': 7,
    'B': [[1.0, 0.0, 0.0]],
}

SMALL_PLAN = {
    'model_kind': 'discordant',
    'link': 'h1',
    'd': 5,
    'k_list': [2],
    'n_list': [2000],
    'trials': 3,
    'L': 10,
    'N': 20,
    'base_seed': 42,
}


class WorkspaceMixin:
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def write_json(self, name, data):
        path = self.dir / name
        path.write_text(json.dumps(data))
        return str(path)

    def run_command(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()


class SeedingTests(SimpleTestCase):
    def test_splitmix64_reference_value(self):
        self.assertEqual(splitmix64(0), 0xE220A8397B1DCDAF)

    def test_trial_seeds_are_distinct_64_bit_values(self):
        seeds = {trial_seed(7, cell, trial) for cell in range(4) for trial in range(50)}
        self.assertEqual(len(seeds), 200)
        self.assertTrue(all(0 <= s < 2 ** 64 for s in seeds))
        self.assertEqual(trial_seed(7, 1, 2), trial_seed(7, 1, 2))
        self.assertNotEqual(trial_seed(7, 1, 2), trial_seed(8, 1, 2))


class PlanTests(SimpleTestCase):
    def plan(self, **overrides):
        values = dict(
            model_kind='discordant', link='h1', d=20, k_list=(3, 4), n_list=(100, 200),
            trials=2, L=10, N=5,
        )
        values.update(overrides)
        return ExperimentPlan(**values)

    def test_cells_run_k_outer_n_inner(self):
        self.assertEqual(self.plan().cells, [
            ('h1', None, 3, 100), ('h1', None, 3, 200), ('h1', None, 4, 100), ('h1', None, 4, 200),
        ])

    def test_s_bar_defaults_to_three_s(self):
        plan = self.plan(d=100, s=3)
        self.assertEqual(plan.s_bar, 9)
        self.assertTrue(plan.highdim)

    def test_invalid_plans(self):
        cases = (
            {'n_list': ()}, {'trials': 0}, {'s_bar': 4}, {'L': 2}, {'k_list': (30,)},
            {'k_list': (11,), 'L': 12}, {'link': None}, {'link_list': ('h2',)},
            {'s': 3, 's_list': (3, 4)}, {'d': 100, 's_list': ()},
        )
        for overrides in cases:
            with self.subTest(overrides), self.assertRaises(ValidationError):
                self.plan(**overrides)

    def test_link_and_sparsity_sweeps(self):
        plan = self.plan(d=100, link=None, link_list=('h1', 'h3'), s_list=(3, 5), k_list=(3,), n_list=(100,))
        self.assertTrue(plan.highdim)
        self.assertEqual(plan.cells, [('h1', 3, 3, 100), ('h1', 5, 3, 100), ('h3', 3, 3, 100), ('h3', 5, 3, 100)])
        self.assertEqual([plan.truncation(s) for s in plan.s_values], [9, 15])
        self.assertIsNone(plan.s_bar)
        self.assertEqual(self.plan(d=100, s_list=(3, 4), s_bar=10).truncation(3), 10)

    def test_trial_record_row(self):
        self.assertEqual(','.join(TrialRecord.header()), TRIALS_HEADER)
        record = TrialRecord(0, 'discordant', 'h1', 20, 3, None, None, 100, 5, 0.25, 0.5, 0.1, 0.0, False)
        self.assertEqual(record.as_row(), [
            '0', 'discordant', 'h1', '20', '3', '', '', '100', '5', '0.25', '0.5', '0.10000000000000001',
            '0', 'false',
        ])
        with self.assertRaises(ValidationError):
            TrialRecord(0, 'discordant', 'h1', 20, 3, None, None, 100, 5, 1.5, 0.5, 0.1, 0.0, False)
        with self.assertRaises(ValidationError):
            TrialRecord(0, 'discordant', 'h1', 20, 3, None, None, 100, 5, 0.5, 0.5, 0.1, -1.0, False)

    def test_concentration_header(self):
        self.assertEqual(
            ConcentrationRecord.header(),
            ['d', 'n', 'trial', 'seed', 'error', 'sparse_error', 'inv_signal', 'sparse_inv_signal'],
        )


class FormTests(SimpleTestCase):
    def test_unknown_keys_are_named(self):
        form = SimulateConfigForm(dict(SIMULATE_EXAMPLE, dimension=3))
        self.assertFalse(form.is_valid())
        self.assertIn('dimension: unknown key.', form.error_summary())

    def test_missing_key_is_named(self):
        data = dict(SIMULATE_EXAMPLE)
        del data['d']
        form = SimulateConfigForm(data)
        self.assertFalse(form.is_valid())
        self.assertTrue(form.error_summary().startswith('d: '))

    def test_vectors_are_normalized_and_checked(self):
        form = SimulateConfigForm(dict(SIMULATE_EXAMPLE, B=[[2.0, 0.0, 0.0]]))
        form.validated()
        np.testing.assert_array_equal(form.cleaned_data['B'][:, 0], [1.0, 0.0, 0.0])
        form = SimulateConfigForm(dict(SIMULATE_EXAMPLE, B=[[1.0, 0.0]]))
        with self.assertRaises(ValidationError):
            form.validated()

    def test_weights_need_mixture(self):
        form = SimulateConfigForm(dict(SIMULATE_EXAMPLE, weights=[1.0]))
        self.assertIn('weights', form.errors)

    def test_plan_defaults(self):
        form = ExperimentPlanForm({k: v for k, v in SMALL_PLAN.items() if k != 'trials'})
        form.validated()
        with override_settings(AIM_DEFAULT_TRIALS=7):
            plan = form.to_plan(jobs=3)
        self.assertEqual(plan.trials, 7)
        self.assertEqual(plan.jobs, 3)
        self.assertEqual(plan.operator, 'implicit')

    def test_plan_link_keys(self):
        plan = dict(SMALL_PLAN)
        del plan['link']
        form = ExperimentPlanForm(plan)
        self.assertFalse(form.is_valid())
        self.assertIn('link: give link or link_list.', form.error_summary())
        form = ExperimentPlanForm(dict(plan, link_list=['h1', 'cubic_sin'], s_list=[2], d=30))
        form.validated()
        self.assertEqual(form.to_plan().links, ('h1', 'cubic_sin'))
        self.assertIn('link_list', ExperimentPlanForm(dict(plan, link_list=['quartic'])).errors)

    def test_list_fields_reject_bad_items(self):
        for bad in ([], [1.5], ['10'], [True], 5):
            form = ExperimentPlanForm(dict(SMALL_PLAN, n_list=bad))
            with self.subTest(bad):
                self.assertIn('n_list', form.errors)


class ExitCodeTests(SimpleTestCase):
    def raising(self, error):
        @exit_codes
        def handle(command):
            raise error
        return handle

    def test_mapping(self):
        cases = [
            (ValidationError('bad'), INVALID_INPUT),
            (DimensionMismatch('bad'), INVALID_INPUT),
            (DegenerateOperator('bad'), RUNTIME_FAILURE),
            (OSError('disk full'), RUNTIME_FAILURE),
            (FloatingPointError('overflow'), RUNTIME_FAILURE),
        ]
        for error, code in cases:
            with self.subTest(type(error).__name__), self.assertRaises(CommandError) as ctx:
                self.raising(error)(None)
            self.assertEqual(ctx.exception.returncode, code)


class SimulateCommandTests(WorkspaceMixin, SimpleTestCase):
    def test_noiseless_cubic_example(self):
        config = self.write_json('sim.json', SIMULATE_EXAMPLE)
        out = self.dir / 'data.csv'
        self.run_command('simulate', config=config, out=str(out))
        data = read_dataset(out)
        self.assertEqual(data.n, 5)
        np.testing.assert_array_equal(data.y, data.X[:, 0] ** 3)
        truth = json.loads((self.dir / 'data.csv.truth.json').read_text())
        self.assertEqual(truth['B'], [[1.0, 0.0, 0.0]])
        self.assertEqual(truth['seed'], 7)

    def test_rerun_is_bit_identical(self):
        config = self.write_json('sim.json', dict(SIMULATE_EXAMPLE, n=50, noise_sd=0.3, B=None))
        first, second = self.dir / 'a.csv', self.dir / 'b.csv'
        self.run_command('simulate', config=config, out=str(first))
        self.run_command('simulate', config=config, out=str(second))
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_seed_flag_overrides_config(self):
        config = self.write_json('sim.json', dict(SIMULATE_EXAMPLE, n=20))
        first, second = self.dir / 'a.csv', self.dir / 'b.csv'
        self.run_command('simulate', config=config, out=str(first))
        self.run_command('simulate', config=config, out=str(second), seed=8)
        self.assertNotEqual(first.read_bytes(), second.read_bytes())

    def test_jobs_flag_does_not_change_the_output(self):
        config = self.write_json('sim.json', dict(SIMULATE_EXAMPLE, n=30))
        first, second = self.dir / 'a.csv', self.dir / 'b.csv'
        self.run_command('simulate', config=config, out=str(first))
        self.run_command('simulate', config=config, out=str(second), jobs=4)
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_missing_d_exits_with_invalid_input(self):
        data = dict(SIMULATE_EXAMPLE)
        del data['d']
        config = self.write_json('sim.json', data)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', config=config, out=str(self.dir / 'data.csv'))
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)
        self.assertIn('d: ', str(ctx.exception))

    def test_missing_config_and_output_directory(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', config=str(self.dir / 'nope.json'), out=str(self.dir / 'x.csv'))
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)
        config = self.write_json('sim.json', SIMULATE_EXAMPLE)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('simulate', config=config, out=str(self.dir / 'missing' / 'x.csv'))
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)


class DecomposeCommandTests(WorkspaceMixin, SimpleTestCase):
    def simulate(self, n, **overrides):
        config = self.write_json('sim.json', dict(SIMULATE_EXAMPLE, n=n, **overrides))
        out = self.dir / 'data.csv'
        self.run_command('simulate', config=config, out=str(out))
        return str(out)

    def read_components(self, path):
        with open(path, newline='') as f:
            return list(csv.reader(f))

    def test_recovers_single_index(self):
        dataset = self.simulate(100_000)
        out = self.dir / 'components.csv'
        stdout = self.run_command('decompose', dataset, k=1, L=20, N=30, out=str(out))
        error_line = next(line for line in stdout.splitlines() if line.startswith('matching error:'))
        self.assertLessEqual(float(error_line.split(':')[1]), 0.05)
        rows = self.read_components(out)
        self.assertEqual(rows[0], ['component_index', 'weight', 'v_1', 'v_2', 'v_3', 'exhausted'])
        self.assertEqual(rows[1][-1], 'false')

    def test_too_many_components_exhaust_the_pool(self):
        # a single direction: every candidate collapses onto it
        dataset = self.simulate(2000, d=1, B=[[1.0]])
        out = self.dir / 'components.csv'
        stdout = self.run_command('decompose', dataset, k=3, L=20, N=30, out=str(out))
        self.assertIn('exhausted', stdout)
        rows = self.read_components(out)
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[1][-1], 'true')

    def test_more_components_than_the_truth(self):
        dataset = self.simulate(500, link='h1', d=6, k=2, noise_sd=0.5, B=None)
        out = self.dir / 'components.csv'
        stdout = self.run_command('decompose', dataset, k=4, L=40, N=30, out=str(out))
        error_line = next(line for line in stdout.splitlines() if line.startswith('matching error:'))
        self.assertLessEqual(float(error_line.split(':')[1]), np.sqrt(2))
        rows = self.read_components(out)
        self.assertGreaterEqual(len(rows), 2)
        self.assertIn(f'Wrote {len(rows) - 1} components', stdout)

    def test_config_file_and_implicit_operator(self):
        dataset = self.simulate(2000)
        config = self.write_json('power.json', {'k': 1, 'L': 8, 'N': 10, 'operator': 'implicit'})
        out = self.dir / 'components.csv'
        tensor = self.dir / 'tensor.csv'
        self.run_command('decompose', dataset, config=config, out=str(out), tensor_out=str(tensor))
        self.assertEqual(len(self.read_components(out)), 2)
        rows = self.read_components(tensor)
        self.assertEqual(rows[0], ['i', 'j', 'k', 'value'])
        self.assertEqual(len(rows), 1 + 10)

    def test_invalid_inputs(self):
        bad = self.dir / 'bad.csv'
        bad.write_text('x_1,x_2,y\n1,2\n')
        with self.assertRaises(CommandError) as ctx:
            self.run_command('decompose', str(bad), k=1)
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)
        dataset = self.simulate(100)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('decompose', dataset)
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('decompose', dataset, k=1, s_bar=5)
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)


class ExperimentCommandTests(WorkspaceMixin, SimpleTestCase):
    def run_plan_file(self, plan, name, **options):
        config = self.write_json(f'{name}.json', plan)
        out = self.dir / f'{name}.csv'
        self.run_command('experiment', config=config, out=str(out), **options)
        return out

    def test_serial_and_parallel_runs_match(self):
        serial = self.run_plan_file(SMALL_PLAN, 'serial', jobs=1)
        parallel = self.run_plan_file(SMALL_PLAN, 'parallel', jobs=4)
        self.assertEqual(serial.read_bytes(), parallel.read_bytes())
        lines = serial.read_text().splitlines()
        self.assertEqual(lines[0], TRIALS_HEADER)
        self.assertEqual(len(lines), 4)

    def test_two_cells_with_eight_workers(self):
        plan = dict(SMALL_PLAN, n_list=[1500, 3000])
        serial = self.run_plan_file(plan, 'serial', jobs=1)
        parallel = self.run_plan_file(plan, 'parallel', jobs=8)
        self.assertEqual(serial.read_bytes(), parallel.read_bytes())
        with open(serial, newline='') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([int(row['trial_id']) for row in rows], list(range(6)))
        self.assertEqual([row['n'] for row in rows], ['1500'] * 3 + ['3000'] * 3)
        self.assertTrue(all(row['wall_ms'] == '0' for row in rows))

    def test_metadata_sidecar(self):
        plan = dict(SMALL_PLAN, d=30, s=2, k_list=[2], trials=1)
        out = self.run_plan_file(plan, 'sparse')
        meta = json.loads(Path(f'{out}.meta.json').read_text())
        self.assertEqual(meta['plan']['s_bar'], 6)
        self.assertEqual(','.join(meta['columns']), TRIALS_HEADER)
        self.assertIn('inv_signal_log_d_over_r', meta['cells'][0])

    def test_empty_n_list(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_plan_file(dict(SMALL_PLAN, n_list=[]), 'empty')
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)

    def test_unwritable_output(self):
        config = self.write_json('plan.json', SMALL_PLAN)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('experiment', config=config, out=str(self.dir / 'missing' / 'out.csv'))
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)

    def test_too_many_components_to_match(self):
        plan = dict(SMALL_PLAN, d=12, k_list=[11], n_list=[500], L=11, N=2)
        with self.assertRaises(CommandError) as ctx:
            self.run_plan_file(plan, 'wide')
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)
        self.assertIn('matching limit', str(ctx.exception))
        self.assertFalse((self.dir / 'wide.csv').exists())

    def test_link_sweep_rows(self):
        plan = dict(SMALL_PLAN, trials=1, link_list=['h1', 'h3'])
        del plan['link']
        out = self.run_plan_file(plan, 'links')
        with open(out, newline='') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([row['link'] for row in rows], ['h1', 'h3'])
        meta = json.loads(Path(f'{out}.meta.json').read_text())
        self.assertEqual([cell['link'] for cell in meta['cells']], ['h1', 'h3'])

    def test_signal_sent_per_trial(self):
        received = []

        def collect(sender, record, **kwargs):
            received.append(record.trial_id)

        trial_completed.connect(collect)
        self.addCleanup(trial_completed.disconnect, collect)
        form = ExperimentPlanForm(SMALL_PLAN)
        form.validated()
        records = run_plan(form.to_plan(), jobs=1)
        self.assertEqual(received, [0, 1, 2])
        self.assertTrue(all(0.0 <= r.matching_error <= np.sqrt(2) for r in records))

    @tag('slow')
    def test_lowdim_desk_scale_sweep(self):
        plan = {
            'model_kind': 'discordant', 'link': 'h1', 'd': 20, 'k_list': [3, 4, 5],
            'n_list': [20_000, 40_000, 80_000], 'trials': 20, 'L': 200, 'N': 300, 'base_seed': 1,
            'operator': 'auto',
        }
        out = self.run_plan_file(plan, 'lowdim', jobs=4)
        self.assert_medians_decrease(out, plan, max_final=None, envelope=True)

    @tag('slow')
    def test_highdim_desk_scale_sweep(self):
        plan = {
            'model_kind': 'discordant', 'link': 'h1', 'd': 100, 's': 3, 's_bar': 9, 'k_list': [3, 4, 5],
            'n_list': [10_000, 30_000, 100_000], 'trials': 10, 'L': 100, 'N': 200, 'base_seed': 2,
            'operator': 'auto',
        }
        out = self.run_plan_file(plan, 'highdim', jobs=4)
        self.assert_medians_decrease(out, plan, max_final=0.3)

    def assert_medians_decrease(self, out, plan, max_final=None, envelope=False):
        with open(out, newline='') as f:
            rows = list(csv.DictReader(f))
        axis, medians = [], []
        for k in plan['k_list']:
            per_n = []
            for n in plan['n_list']:
                cell = [row for row in rows if int(row['k']) == k and int(row['n']) == n]
                per_n.append(float(np.median([float(row['error']) for row in cell])))
                axis.append(float(cell[0]['inv_signal']))
            medians.extend(per_n)
            self.assertEqual(per_n, sorted(per_n, reverse=True), f'k={k}: {per_n}')
            if max_final is not None:
                self.assertLessEqual(per_n[-1], max_final)
        if envelope:
            slope, _ = np.polyfit(axis, medians, 1)
            offset = max(m - slope * x for x, m in zip(axis, medians))
            self.assertLessEqual(offset, 0.5)


class ConcentrationCommandTests(WorkspaceMixin, SimpleTestCase):
    def read_rows(self, path):
        with open(path, newline='') as f:
            return list(csv.DictReader(f))

    def test_small_grid(self):
        out = self.dir / 'conc.csv'
        self.run_command('verify-concentration', d_list=[3], n_list=[500, 1000], trials=2, r=3, out=str(out))
        rows = self.read_rows(out)
        self.assertEqual(len(rows), 4)
        for row in rows:
            error, sparse = float(row['error']), float(row['sparse_error'])
            self.assertGreater(error, 0.0)
            # r = d puts no constraint on the support
            self.assertLessEqual(abs(error - sparse), 0.05 * error)

    def test_rerun_is_bit_identical(self):
        first, second = self.dir / 'a.csv', self.dir / 'b.csv'
        for out in (first, second):
            self.run_command('verify-concentration', d_list=[4], n_list=[300], trials=2, seed=5, out=str(out))
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_dense_guard(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('verify-concentration', d_list=[65], n_list=[100], trials=1,
                             out=str(self.dir / 'conc.csv'))
        self.assertEqual(ctx.exception.returncode, INVALID_INPUT)

    @tag('slow')
    def test_error_halves_when_n_quadruples(self):
        out = self.dir / 'conc.csv'
        self.run_command('verify-concentration', d_list=[10], n_list=[20_000, 80_000], trials=20,
                         seed=3, out=str(out), jobs=4)
        rows = self.read_rows(out)
        small = np.median([float(r['error']) for r in rows if r['n'] == '20000'])
        large = np.median([float(r['error']) for r in rows if r['n'] == '80000'])
        self.assertTrue(1.4 <= small / large <= 2.9, small / large)

    @tag('slow')
    def test_large_n_at_tiny_d(self):
        out = self.dir / 'conc.csv'
        self.run_command('verify-concentration', d_list=[3], n_list=[1_000_000], trials=5, seed=4, out=str(out))
        rows = self.read_rows(out)
        self.assertLessEqual(np.median([float(r['error']) for r in rows]), 0.35)
