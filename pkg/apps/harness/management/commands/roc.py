from pathlib import Path

from apps.harness.management.base import ToolkitCommand
from apps.harness.serializers import experiment_config
from apps.harness.services import ROC_RESULTS, run_experiment


class Command(ToolkitCommand):
    help = 'Sweep the energy detector over target false-alarm probabilities'

    def add_arguments(self, parser):
        parser.add_argument('--noise-dbm', type=float, required=True)
        parser.add_argument('--snr-db', type=float, required=True)
        parser.add_argument('--n', type=int, required=True, help='Samples per frame')
        parser.add_argument('--pf', type=float, nargs='+', required=True, help='Target false-alarm probabilities')
        parser.add_argument('--trials', type=int, default=10000)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', required=True, help='Output directory')

    def execute_toolkit(self, *args, **options):
        config = experiment_config('roc', {
            'noise_dbm': options['noise_dbm'],
            'snr_db': options['snr_db'],
            'n': options['n'],
            'pf_grid': options['pf'],
            'trials': options['trials'],
            'seed': options['seed'],
        })
        run_experiment('roc', config, options['out'])
        self.stdout.write(Path(options['out'], ROC_RESULTS).read_text(encoding='utf-8'), ending='')
