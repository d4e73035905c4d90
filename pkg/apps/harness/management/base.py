import contextlib

from django.core.management.base import BaseCommand, CommandError

from apps.common import serialization
from apps.common.exceptions import ConfigError, ToolkitError
from apps.llm.serializers import backend_config_from_arg
from apps.llm.transcripts import TranscriptWriter


class ToolkitCommand(BaseCommand):
    """Runs `execute_toolkit` and exits with the ToolkitError's documented status on failure"""

    def handle(self, *args, **options):
        try:
            return self.execute_toolkit(*args, **options)
        except ToolkitError as e:
            if e.details:
                self.stderr.write(serialization.dumps(e.details))
            raise CommandError(f"{e.code}: {e.message}", returncode=e.exit_code)

    def execute_toolkit(self, *args, **options):
        raise NotImplementedError

    def add_backend_arguments(self, parser, default=None):
        parser.add_argument('--backend', default=default,
                            help='Backend kind (http, replay, oracle-sensing, oracle-waterfill) or a config JSON file')
        parser.add_argument('--transcript', help='Transcript to replay (replay backend)')
        parser.add_argument('--record', help='Write every exchange to this JSON-lines transcript')

    def backend_data(self, options):
        """The backend as a config mapping, or None when no --backend was given"""
        if not options.get('backend'):
            if options.get('transcript'):
                raise ConfigError("--transcript needs --backend replay")
            return None
        return backend_config_from_arg(options['backend'], transcript_path=options.get('transcript')).to_dict()

    def recorder(self, options, config):
        """A transcript writer for --record, usable as a context manager either way"""
        backend = getattr(config, 'backend', None)
        if not options.get('record') or backend is None:
            return contextlib.nullcontext()
        return TranscriptWriter(options['record'], backend)

    def read_config(self, path) -> dict:
        data = serialization.read_json(path)
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a JSON object")
        return data

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))
