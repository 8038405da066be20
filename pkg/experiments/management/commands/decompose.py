from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from estimation.decomposition import PowerConfig, decompose
from estimation.io import write_components, write_tensor
from estimation.metrics import MAX_MATCHED_COMPONENTS, matching_error
from estimation.moments import ImplicitMoment, moment_operator
from experiments.decorators import exit_codes
from experiments.forms import OPERATOR_CHOICES, DecomposeConfigForm, check_output, check_seed, read_config
from simulation.io import format_float, read_dataset, read_truth, truth_path

DEFAULT_L = 200
DEFAULT_N = 300


class Command(BaseCommand):
    help = 'Estimate k index vectors from a dataset CSV by (truncated) tensor power iteration'

    def add_arguments(self, parser):
        parser.add_argument('dataset', help='CSV with columns x_1..x_d,y')
        parser.add_argument('--config', help='JSON with any of k, L, N, s_bar, dedup_radius, operator, seed')
        parser.add_argument('--out', help='components CSV (default: <dataset>.components.csv)')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--jobs', type=int, default=1, help='threads for the dense moment build')
        parser.add_argument('--k', type=int)
        parser.add_argument('--L', type=int, dest='L')
        parser.add_argument('--N', type=int, dest='N')
        parser.add_argument('--s-bar', type=int, dest='s_bar', help='truncation level; enables the sparse variant')
        parser.add_argument(
            '--operator', choices=[value for value, _ in OPERATOR_CHOICES],
            help='moment operator (default implicit; auto builds the dense tensor when n >= d^2)',
        )
        parser.add_argument('--tensor-out', help='also write the moment tensor entries (i <= j <= k) to this CSV')

    def option(self, options, form, name, default=None):
        if options.get(name) is not None:
            return options[name]
        return form.value(name, default)

    @exit_codes
    def handle(self, *args, **options):
        form = DecomposeConfigForm(read_config(options['config']) if options['config'] else {})
        form.validated()
        k = self.option(options, form, 'k')
        if k is None:
            raise ValidationError("k: give --k or set k in the config.")
        out = check_output(options['out'] or f"{options['dataset']}.components.csv")
        seed = check_seed(options['seed'])
        tensor_out = check_output(options['tensor_out']) if options['tensor_out'] else None

        data = read_dataset(options['dataset'])
        config = PowerConfig(
            L=self.option(options, form, 'L', DEFAULT_L),
            N=self.option(options, form, 'N', DEFAULT_N),
            k=k,
            truncation=self.option(options, form, 's_bar'),
            dedup_radius=form.cleaned_data.get('dedup_radius'),
            seed=seed if seed is not None else form.value('seed', 0),
        )
        M = moment_operator(data, self.option(options, form, 'operator', 'implicit'), jobs=options['jobs'])
        result = decompose(M, config)
        write_components(result, data.d, out)
        if tensor_out:
            write_tensor(M.dense(options['jobs']) if isinstance(M, ImplicitMoment) else M, tensor_out)

        for index, weight in enumerate(result.weights, start=1):
            self.stdout.write(f'component {index}: weight {format_float(weight)}')
        truth = truth_path(options['dataset'])
        if truth.exists():
            self.report_matching(result, read_truth(truth)[1])
        if result.exhausted:
            self.stdout.write(self.style.WARNING(
                f'Candidate pool exhausted: found {result.k} of {k} components'
            ))
        self.stdout.write(self.style.SUCCESS(f'Wrote {result.k} components to {out}'))

    def report_matching(self, result, params):
        if params.k > MAX_MATCHED_COMPONENTS:
            self.stdout.write(self.style.WARNING(
                f'Truth has k={params.k}; matching error is only computed for k <= {MAX_MATCHED_COMPONENTS}'
            ))
            return
        error = matching_error(result.components, params, allow_missing=True, allow_extra=True)
        self.stdout.write(f'matching error: {format_float(error)}')
        if result.k > params.k:
            self.stdout.write(f'{result.k - params.k} surplus components left out of the matching')
