import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from experiments.decorators import exit_codes
from experiments.forms import ConcentrationForm, check_output, check_seed, read_config
from experiments.plans import ConcentrationRecord
from experiments.runner import run_concentration, write_rows
from simulation.io import format_float


class Command(BaseCommand):
    help = 'Operator-norm error of the empirical moment tensor over a (d, n) grid'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON with d_list, n_list, trials, r, ...')
        parser.add_argument('--out', required=True, help='CSV of norm errors')
        parser.add_argument('--seed', type=int, help='overrides base_seed')
        parser.add_argument('--jobs', type=int)
        parser.add_argument('--d', type=int, nargs='+', dest='d_list')
        parser.add_argument('--n', type=int, nargs='+', dest='n_list')
        parser.add_argument('--trials', type=int)
        parser.add_argument('--r', type=int, help='also report the r-sparse norm')

    @exit_codes
    def handle(self, *args, **options):
        data = read_config(options['config']) if options['config'] else {}
        for key in ('d_list', 'n_list', 'trials', 'r'):
            if options.get(key) is not None:
                data[key] = options[key]
        form = ConcentrationForm(data)
        form.validated()
        plan = form.to_plan(base_seed=check_seed(options['seed']))
        jobs = settings.AIM_JOBS if options['jobs'] is None else options['jobs']
        if jobs < 1:
            raise ValidationError("jobs must be at least 1.")
        out = check_output(options['out'])

        records = run_concentration(plan, jobs)
        write_rows(records, ConcentrationRecord.header(), out)

        for d, n in plan.cells:
            errors = [record.error for record in records if record.d == d and record.n == n]
            self.stdout.write(f'd={d} n={n}: median error {format_float(np.median(errors))}')
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(records)} rows to {out}'))
