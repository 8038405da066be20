import numpy as np
from django.core.management.base import BaseCommand

from experiments.decorators import exit_codes
from experiments.forms import SimulateConfigForm, check_output, check_seed, read_config
from simulation.generators import sample_dataset
from simulation.io import truth_path, write_dataset, write_truth


class Command(BaseCommand):
    help = 'Simulate a dataset from a JSON model config; writes the CSV and a .truth.json sidecar'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='JSON model config')
        parser.add_argument('--out', required=True, help='dataset CSV to write')
        parser.add_argument('--seed', type=int, help='overrides the seed in the config')
        parser.add_argument(
            '--jobs', type=int, default=1,
            help='accepted so every command takes the same flags; simulation always runs serially',
        )

    @exit_codes
    def handle(self, *args, **options):
        form = SimulateConfigForm(read_config(options['config']))
        form.validated()
        out = check_output(options['out'])
        seed = check_seed(options['seed'])
        if seed is None:
            seed = form.value('seed', 0)

        rng = np.random.default_rng(seed)
        spec = form.model_spec()
        params = form.param_set(rng)
        data = sample_dataset(spec, params, form.cleaned_data['n'], rng)

        write_dataset(data, out)
        write_truth(spec, params, truth_path(out), seed)
        self.stdout.write(
            self.style.SUCCESS(f'Wrote {data.n} observations (d={data.d}, k={spec.k}) to {out}')
        )
