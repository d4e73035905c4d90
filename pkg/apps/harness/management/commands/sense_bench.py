from pathlib import Path

from apps.common.exceptions import BackendError, ConfigError
from apps.harness.management.base import ToolkitCommand
from apps.harness.serializers import SENSE_BENCH_PRESETS, experiment_config
from apps.harness.services import SENSE_RESULTS, run_experiment


class Command(ToolkitCommand):
    help = 'Compare the energy detector with the prompted detector across SNRs'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Sensing benchmark config JSON; overrides the preset')
        parser.add_argument('--preset', choices=sorted(SENSE_BENCH_PRESETS))
        parser.add_argument('--out', required=True, help='Output directory')
        parser.add_argument('--trials', type=int, help='Energy detector trials per SNR')
        self.add_backend_arguments(parser)

    def execute_toolkit(self, *args, **options):
        data = dict(SENSE_BENCH_PRESETS[options['preset']]) if options['preset'] else {}
        if options['config']:
            data.update(self.read_config(options['config']))
        if not data:
            raise ConfigError("Give --config, --preset or both")
        if options['trials'] is not None:
            data['energy_trials'] = options['trials']
        backend = self.backend_data(options)
        if backend is not None:
            data['backend'] = backend

        config = experiment_config('sense_bench', data)
        with self.recorder(options, config) as recorder:
            manifest = run_experiment('sense_bench', config, options['out'], recorder)
        self.stdout.write(Path(options['out'], SENSE_RESULTS).read_text(encoding='utf-8'), ending='')

        errors = manifest.summary['errors']
        if errors:
            raise BackendError(f"Prompted detector aborted at {len(errors)} SNR point(s)", {'errors': errors})
        self.success(f"Wrote {', '.join(sorted(manifest.outputs))} to {options['out']}")
