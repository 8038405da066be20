from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from experiments.decorators import exit_codes
from experiments.forms import ExperimentPlanForm, check_output, check_seed, read_config
from experiments.plans import TrialRecord
from experiments.runner import run_plan, write_metadata, write_rows


class Command(BaseCommand):
    help = 'Run an experiment plan (JSON) and write one CSV row per trial plus a .meta.json sidecar'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='JSON experiment plan')
        parser.add_argument('--out', help='trials CSV; overrides "output" in the plan')
        parser.add_argument('--seed', type=int, help='overrides base_seed')
        parser.add_argument('--jobs', type=int, help='worker processes; overrides the plan')
        parser.add_argument(
            '--full', action='store_true',
            help=f'run the full trial count ({settings.AIM_FULL_TRIALS}) per cell',
        )

    @exit_codes
    def handle(self, *args, **options):
        form = ExperimentPlanForm(read_config(options['config']))
        form.validated()
        if options['jobs'] is not None and options['jobs'] < 1:
            raise ValidationError("jobs must be at least 1.")
        plan = form.to_plan(
            base_seed=check_seed(options['seed']),
            jobs=options['jobs'],
            output=options['out'],
            trials=settings.AIM_FULL_TRIALS if options['full'] else None,
        )
        if not plan.output:
            raise ValidationError("output: give --out or set output in the plan.")
        out = check_output(plan.output)

        records = run_plan(plan)
        write_rows(records, TrialRecord.header(), out)
        write_metadata(plan, f'{out}.meta.json')

        exhausted = sum(record.exhausted for record in records)
        if exhausted:
            self.stdout.write(self.style.WARNING(f'{exhausted} trial(s) exhausted the candidate pool'))
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(records)} trials to {out}'))
