from apps.harness.management.base import ToolkitCommand
from apps.harness.services import rerun


class Command(ToolkitCommand):
    help = 'Repeat a recorded run offline and check its outputs byte for byte'

    def add_arguments(self, parser):
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--out', required=True, help='Output directory for the repeated run')
        parser.add_argument('--transcript', help='Replay this transcript instead of the recorded backend')

    def execute_toolkit(self, *args, **options):
        manifest = rerun(options['manifest'], options['out'], options['transcript'])
        self.success(f"Reproduced {len(manifest.outputs)} output(s) of {manifest.command}")
