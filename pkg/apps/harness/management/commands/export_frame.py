from apps.common import serialization
from apps.harness.management.base import ToolkitCommand
from apps.signal.serializers import frame_from_dict, frame_to_json
from apps.signal.services import Hypothesis, NoisePower, SnrSpec, generate_frame


class Command(ToolkitCommand):
    help = 'Export a seeded sensing frame, or verify an exported frame against its seed'

    def add_arguments(self, parser):
        parser.add_argument('--truth', choices=[h.value for h in Hypothesis], default=Hypothesis.H0.value)
        parser.add_argument('--noise-dbm', type=float, default=-100.0)
        parser.add_argument('--snr-db', type=float)
        parser.add_argument('--n', type=int, default=50)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', help='Frame file to write; standard output when omitted')
        parser.add_argument('--check', help='Exported frame file to verify instead')

    def execute_toolkit(self, *args, **options):
        if options['check']:
            frame = frame_from_dict(serialization.read_json(options['check']))
            self.success(f"{options['check']}: {frame.n} samples match seed {frame.seed}")
            return

        snr = SnrSpec.from_db(options['snr_db']) if options['snr_db'] is not None else None
        frame = generate_frame(options['truth'], NoisePower.from_dbm(options['noise_dbm']), snr,
                               options['n'], options['seed'])
        text = frame_to_json(frame)
        if options['out']:
            digest = serialization.write_text(options['out'], text)
            self.success(f"Wrote {options['out']} (sha256 {digest})")
        else:
            self.stdout.write(text, ending='')
