from pathlib import Path

from apps.harness.management.base import ToolkitCommand
from apps.harness.serializers import experiment_config
from apps.harness.services import RAG_HITS, RAG_TABLE, run_experiment


class Command(ToolkitCommand):
    help = 'Build a protocol-document index, query it, or grade multiple-choice answers with it'

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest='action', required=True)

        ingest = actions.add_parser('ingest', help='Chunk documents into a BM25 index')
        ingest.add_argument('--docs', required=True, help='Document JSON or a directory of .txt/.md files')
        ingest.add_argument('--index', required=True, help='Index file to write')
        ingest.add_argument('--chunk-tokens', type=int)
        ingest.add_argument('--overlap', type=int)

        query = actions.add_parser('query', help='Print the top-k chunks for a question')
        query.add_argument('--index', required=True)
        query.add_argument('--question', required=True)
        query.add_argument('--k', type=int)
        query.add_argument('--out', help='Output directory (default: <index stem>-query beside the index)')

        evaluate = actions.add_parser('eval', help='Answer a question file through a backend and grade it')
        evaluate.add_argument('--questions', required=True)
        evaluate.add_argument('--index')
        evaluate.add_argument('--k', type=int)
        evaluate.add_argument('--no-rag', action='store_true', help='Ask without retrieved context')
        evaluate.add_argument('--out', required=True, help='Output directory')
        self.add_backend_arguments(evaluate)

    def execute_toolkit(self, *args, **options):
        getattr(self, f"run_{options['action']}")(options)

    def run_ingest(self, options):
        index_path = Path(options['index'])
        data = {'docs_path': options['docs'], 'index_name': index_path.name}
        if options['chunk_tokens'] is not None:
            data['chunk_tokens'] = options['chunk_tokens']
        if options['overlap'] is not None:
            data['overlap_tokens'] = options['overlap']
        config = experiment_config('rag_ingest', data)
        manifest = run_experiment('rag_ingest', config, index_path.parent,
                                  manifest_name=f'{index_path.stem}.manifest.json')
        self.success(f"Indexed {manifest.summary['documents']} documents into "
                     f"{manifest.summary['chunks']} chunks at {index_path}")

    def run_query(self, options):
        index_path = Path(options['index'])
        data = {'index_path': str(index_path), 'question': options['question']}
        if options['k'] is not None:
            data['k'] = options['k']
        config = experiment_config('rag_query', data)
        out = Path(options['out']) if options['out'] else index_path.with_name(f'{index_path.stem}-query')
        run_experiment('rag_query', config, out)
        self.stdout.write((out / RAG_HITS).read_text(encoding='utf-8'), ending='')

    def run_eval(self, options):
        data = {'questions_path': options['questions'], 'index_path': options['index'],
                'no_rag': options['no_rag']}
        if options['k'] is not None:
            data['k'] = options['k']
        backend = self.backend_data(options)
        if backend is not None:
            data['backend'] = backend
        config = experiment_config('rag_eval', data)
        with self.recorder(options, config) as recorder:
            run_experiment('rag_eval', config, options['out'], recorder)
        self.stdout.write(Path(options['out'], RAG_TABLE).read_text(encoding='utf-8'), ending='')
