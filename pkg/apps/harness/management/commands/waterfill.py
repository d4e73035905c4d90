from pathlib import Path

from apps.common import serialization
from apps.common.exceptions import ValidationFailure
from apps.harness.management.base import ToolkitCommand
from apps.harness.serializers import experiment_config
from apps.harness.services import run_experiment
from apps.prompting.services import PromptStyle
from apps.waterfill.serializers import proposal_from_dict


class Command(ToolkitCommand):
    help = 'Solve a power-allocation problem, or validate a proposed allocation against the optimum'

    def add_arguments(self, parser):
        parser.add_argument('--problem', required=True, help='Problem JSON with cnrs and budget_mw')
        parser.add_argument('--proposed', help='Proposed solution JSON with powers_mw')
        parser.add_argument('--tol', type=float)
        parser.add_argument('--ask-backend', dest='backend',
                            help='Ask this backend (kind or config file) for the proposed allocation')
        parser.add_argument('--style', choices=[style.value for style in PromptStyle])
        parser.add_argument('--strict', action='store_true', help='Exit nonzero unless the verdict is optimal')
        parser.add_argument('--out', help='Output directory for the result and its manifest (default: <problem stem>-run beside the problem)')
        parser.add_argument('--transcript', help='Transcript to replay (replay backend)')
        parser.add_argument('--record', help='Write the exchange to this JSON-lines transcript')

    def execute_toolkit(self, *args, **options):
        data = self.read_config(options['problem'])
        if options['proposed']:
            powers, tol = proposal_from_dict(self.read_config(options['proposed']))
            data['proposed_mw'] = powers
            if tol is not None:
                data['tol'] = tol
        if options['tol'] is not None:
            data['tol'] = options['tol']
        if options['style']:
            data['style'] = options['style']
        backend = self.backend_data(options)
        if backend is not None:
            data['backend'] = backend

        config = experiment_config('waterfill', data)
        problem = Path(options['problem'])
        out = Path(options['out']) if options['out'] else problem.with_name(f'{problem.stem}-run')
        with self.recorder(options, config) as recorder:
            manifest = run_experiment('waterfill', config, out, recorder)
        result = serialization.read_json(out / next(iter(manifest.outputs)))
        self.stdout.write(serialization.dumps(result))

        if options['strict'] and result.get('verdict', 'optimal') != 'optimal':
            raise ValidationFailure(f"Proposed allocation is {result['verdict']}", result)
