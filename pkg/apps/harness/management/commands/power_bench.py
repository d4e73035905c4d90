from pathlib import Path

from apps.harness.management.base import ToolkitCommand
from apps.harness.serializers import experiment_config
from apps.harness.services import POWER_RESULTS, run_experiment
from apps.prompting.services import PromptStyle


class Command(ToolkitCommand):
    help = 'Tally water-filling verdicts per prompt style over random instances'

    def add_arguments(self, parser):
        parser.add_argument('--instances', type=int)
        parser.add_argument('--k-max', type=int)
        parser.add_argument('--styles', nargs='+', choices=[style.value for style in PromptStyle])
        parser.add_argument('--seed', type=int)
        parser.add_argument('--tol', type=float)
        parser.add_argument('--out', required=True, help='Output directory')
        self.add_backend_arguments(parser)

    def execute_toolkit(self, *args, **options):
        data = {
            key: options[key] for key in ('instances', 'k_max', 'styles', 'seed', 'tol')
            if options[key] is not None
        }
        backend = self.backend_data(options)
        if backend is not None:
            data['backend'] = backend

        config = experiment_config('power_bench', data)
        with self.recorder(options, config) as recorder:
            run_experiment('power_bench', config, options['out'], recorder)
        self.stdout.write(Path(options['out'], POWER_RESULTS).read_text(encoding='utf-8'), ending='')
