import io
import json
import os
from unittest import mock

import requests
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.common import serialization
from apps.common.exceptions import ConfigError, InvalidParameterError, UpstreamPayloadError
from apps.common.testing import NoNetworkMixin, TempDirMixin
from apps.detector.services import parse_rate_csv
from apps.llm.backends import HttpChatBackend
from apps.llm.tests import SECRET, TOKEN_ENV, http_config
from apps.llm.transcripts import BackendConfig, ChatExchange, TranscriptWriter
from apps.ragstore.serializers import load_questions
from apps.ragstore.services import ChunkIndex
from apps.ragstore.tests import NEEDLE, needle_corpus
from .experiments import RunManifest
from .serializers import REFERENCE_PRESET, experiment_config
from .services import build_eval_prompts

ALPHA_GOLD, BETA_GOLD = 1, 2


class ScriptedBackend:
    def __init__(self, reply):
        self.reply = reply

    def complete(self, prompt):
        if isinstance(self.reply, Exception):
            raise self.reply
        return self.reply


def run(*args):
    stdout = io.StringIO()
    call_command(*args, stdout=stdout, stderr=io.StringIO())
    return stdout.getvalue()


def question_records():
    records = []
    for i in range(10):
        category, gold = ('alpha', ALPHA_GOLD) if i < 5 else ('beta', BETA_GOLD)
        records.append({
            'question': f'Question {i}: what sets the {NEEDLE}?',
            'options': ['Scheduler', 'Pilot plan', 'Cell load', 'Handover'],
            'answer': gold,
            'category': category,
        })
    return records


def replay_transcript(path, prompts, responses):
    config = BackendConfig.from_settings(kind='replay', transcript_path=str(path))
    with TranscriptWriter(path, config) as writer:
        for prompt, response in zip(prompts, responses):
            writer.append(ChatExchange(
                system_text=prompt.system_text, user_text=prompt.user_text, response_text=response,
                model_name=config.model_name, temperature=config.temperature, latency_ms=0,
                prompt_fingerprint=prompt.fingerprint, timestamp='',
            ))
    return path


class ExperimentConfigTests(NoNetworkMixin, SimpleTestCase):

    def test_reference_preset(self):
        config = experiment_config('sense_bench', {**REFERENCE_PRESET, 'backend': {'kind': 'oracle-sensing'}})
        self.assertEqual(config.snr_db_list, (-20.0, -10.0, -6.0, 0.0))
        self.assertEqual((config.n_samples, config.few_shot_examples, config.test_prompts_per_snr), (50, 20, 20))
        self.assertFalse(config.oracle_equality_mode)

    def test_invalid_configs(self):
        with self.assertRaises(ConfigError):
            experiment_config('sense_bench', {**REFERENCE_PRESET, 'few_shot_examples': 3})
        with self.assertRaises(ConfigError):
            experiment_config('sense_bench', {**REFERENCE_PRESET, 'pf_target': 1.0})
        with self.assertRaises(ConfigError):
            experiment_config('roc', {'noise_dbm': -100, 'snr_db': 0, 'n': 50, 'pf_grid': [0.5, 0.0], 'trials': 5})
        with self.assertRaises(InvalidParameterError):
            experiment_config('waterfill', {'cnrs': [2, 1], 'budget_mw': 1, 'proposed_mw': [0.5, 0.5],
                                            'backend': {'kind': 'oracle-waterfill'}})
        with self.assertRaises(ConfigError):
            experiment_config('rag_eval', {'questions_path': 'q.json', 'backend': {'kind': 'oracle-sensing'}})
        with self.assertRaises(ConfigError):
            experiment_config('rag_query', {'index_path': 'index.json', 'question': '', 'k': 3})

    def test_snapshot_round_trip(self):
        config = experiment_config('sense_bench', {**REFERENCE_PRESET, 'backend': {'kind': 'oracle-sensing'}})
        self.assertEqual(experiment_config('sense_bench', config.to_dict()), config)


class SenseBenchCommandTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def rows(self, out, name='results.csv'):
        return parse_rate_csv((out / name).read_text(encoding='utf-8'))

    def test_oracle_matches_energy_detector_on_query_frames(self):
        out = self.tmp / 'oracle'
        run('sense_bench', '--preset=oracle-equality', f'--out={out}')

        rows = self.rows(out)
        self.assertEqual(len(rows), 8)
        llm = {row.snr_db: row for row in rows if row.method == 'llm'}
        query = {row.snr_db: row for row in self.rows(out, 'query_energy.csv')}
        self.assertEqual(sorted(llm), [-20.0, -10.0, -6.0, 0.0])
        for snr_db, row in llm.items():
            self.assertEqual((row.pd, row.pf), (query[snr_db].pd, query[snr_db].pf))
            self.assertEqual(row.trials, 20)

        manifest = RunManifest.load(out / 'manifest.json')
        self.assertTrue(manifest.parameters['oracle_equality_mode'])
        self.assertEqual([entry['count'] for entry in manifest.summary['unparseable']], [0, 0, 0, 0])
        self.assertEqual(manifest.summary['errors'], [])

    def test_energy_detector_at_zero_db(self):
        out = self.tmp / 'reference-run'
        run('sense_bench', '--preset=reference', '--trials=2000', '--backend=oracle-sensing', f'--out={out}')
        [row] = [row for row in self.rows(out) if row.method == 'energy' and row.snr_db == 0.0]
        self.assertGreaterEqual(row.pd, 0.99)
        self.assertEqual(row.trials, 2000)

    def test_unparseable_responses_count_as_absent(self):
        out = self.tmp / 'vague'
        with mock.patch('apps.llm.services.build_backend', return_value=ScriptedBackend('Hard to say.')):
            run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--out={out}')
        for row in self.rows(out):
            if row.method == 'llm':
                self.assertEqual((row.pd, row.pf), (0.0, 0.0))
        manifest = RunManifest.load(out / 'manifest.json')
        self.assertEqual([entry['count'] for entry in manifest.summary['unparseable']], [40] * 4)

    def test_backend_failure_keeps_energy_rows(self):
        reference, broken = self.tmp / 'reference', self.tmp / 'broken'
        run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--out={reference}')
        failing = ScriptedBackend(UpstreamPayloadError('garbled'))
        with mock.patch('apps.llm.services.build_backend', return_value=failing):
            with self.assertRaises(CommandError) as ctx:
                run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--out={broken}')
        self.assertEqual(ctx.exception.returncode, 3)

        energy = [row for row in self.rows(reference) if row.method == 'energy']
        self.assertEqual(self.rows(broken), energy)
        manifest = RunManifest.load(broken / 'manifest.json')
        self.assertEqual([e['code'] for e in manifest.summary['errors']], ['UPSTREAM_PAYLOAD'] * 4)

    @mock.patch.dict(os.environ, {TOKEN_ENV: SECRET})
    def test_transport_failure_is_recorded(self):
        session = mock.Mock()
        session.post.side_effect = requests.exceptions.ContentDecodingError('bad gzip stream')
        failing = HttpChatBackend(http_config(), session=session, sleep=lambda seconds: None)
        out = self.tmp / 'transport'
        with mock.patch('apps.llm.services.build_backend', return_value=failing):
            with self.assertRaises(CommandError) as ctx:
                run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--out={out}')
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertEqual([row.method for row in self.rows(out)], ['energy'] * 4)
        manifest = RunManifest.load(out / 'manifest.json')
        self.assertEqual([e['code'] for e in manifest.summary['errors']], ['BACKEND_ERROR'] * 4)

    def test_replay_reproduces_recorded_run(self):
        recorded, replayed = self.tmp / 'recorded', self.tmp / 'replayed'
        transcript = self.tmp / 'sense.jsonl'
        run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--record={transcript}',
            f'--out={recorded}')
        run('sense_bench', '--preset=reference', '--backend=replay', f'--transcript={transcript}',
            f'--out={replayed}')
        self.assertEqual((recorded / 'results.csv').read_bytes(), (replayed / 'results.csv').read_bytes())

        again = self.tmp / 'again'
        run('rerun', f'--manifest={recorded / "manifest.json"}', f'--out={again}', f'--transcript={transcript}')
        self.assertEqual((recorded / 'results.csv').read_bytes(), (again / 'results.csv').read_bytes())

    def test_manifest_is_deterministic(self):
        first, second = self.tmp / 'first', self.tmp / 'second'
        for out in (first, second):
            run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--out={out}')
        self.assertEqual((first / 'manifest.json').read_bytes(), (second / 'manifest.json').read_bytes())
        manifest = json.loads((first / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['toolkit_version'], '1.0.0')
        self.assertEqual(set(manifest['outputs']), {'results.csv', 'query_energy.csv'})
        self.assertEqual(manifest['parameters']['stride'], 5)
        self.assertEqual(len(manifest['seeds']['per_snr']), 4)

    def test_rerun_detects_changed_output(self):
        out = self.tmp / 'run'
        run('sense_bench', '--preset=reference', '--backend=oracle-sensing', f'--out={out}')
        run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "ok"}')

        manifest = RunManifest.load(out / 'manifest.json')
        manifest.outputs['results.csv'] = '0' * 64
        manifest.write(out / 'manifest.json')
        with self.assertRaises(CommandError) as ctx:
            run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "bad"}')
        self.assertEqual(ctx.exception.returncode, 4)

    def test_config_errors_exit_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('sense_bench', f'--out={self.tmp}')
        self.assertEqual(ctx.exception.returncode, 2)

        config = self.tmp / 'odd.json'
        config.write_text(json.dumps({**REFERENCE_PRESET, 'few_shot_examples': 5}), encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            run('sense_bench', f'--config={config}', f'--out={self.tmp}')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_http_manifest_needs_transcript_to_rerun(self):
        manifest = RunManifest(command='sense_bench', config={
            **REFERENCE_PRESET, 'backend': {'kind': 'http', 'endpoint_url': 'https://llm.invalid'},
        })
        path = manifest.write(self.tmp / 'http.json')
        with self.assertRaises(CommandError) as ctx:
            run('rerun', f'--manifest={path}', f'--out={self.tmp / "out"}')
        self.assertEqual(ctx.exception.returncode, 2)


class RocCommandTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def roc(self, *args):
        out = self.tmp / 'roc'
        run('roc', '--noise-dbm=-100', f'--out={out}', *args)
        return parse_rate_csv((out / 'roc.csv').read_text(encoding='utf-8')), out

    def test_detection_probability_at_zero_db(self):
        [row], _ = self.roc('--snr-db=0', '--n=50', '--pf', '0.5', '--trials=100000', '--seed=7')
        self.assertAlmostEqual(row.pd, 0.9998, delta=0.01)
        self.assertEqual(row.pf_target, 0.5)

    def test_one_row_per_target(self):
        rows, _ = self.roc('--snr-db=-6', '--n=50', '--pf', '0.05', '0.1', '0.5', '0.9', '--trials=20000')
        self.assertEqual([row.pf_target for row in rows], [0.05, 0.1, 0.5, 0.9])
        pfs = [row.pf for row in rows]
        self.assertEqual(pfs, sorted(pfs))

    def test_single_trial(self):
        [row], _ = self.roc('--snr-db=0', '--n=10', '--pf', '0.5', '--trials=1')
        self.assertAlmostEqual(row.half_width, 0.98)
        self.assertEqual(row.trials, 1)

    def test_invalid_target(self):
        with self.assertRaises(CommandError) as ctx:
            self.roc('--snr-db=0', '--n=10', '--pf', '1.5')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_rerun(self):
        _, out = self.roc('--snr-db=-10', '--n=50', '--pf', '0.1', '0.5', '--trials=5000')
        run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "again"}')
        self.assertEqual((out / 'roc.csv').read_bytes(), (self.tmp / 'again' / 'roc.csv').read_bytes())


class WaterfillCommandTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.problem = self.tmp / 'problem.json'
        self.problem.write_text(json.dumps({'cnrs': [2.0, 1.0], 'budget_mw': 1.0}), encoding='utf-8')

    def proposal(self, powers):
        path = self.tmp / 'proposed.json'
        path.write_text(json.dumps({'powers_mw': powers}), encoding='utf-8')
        return path

    def test_solve(self):
        result = json.loads(run('waterfill', f'--problem={self.problem}'))
        self.assertEqual(len(result['powers_mw']), 2)
        self.assertAlmostEqual(result['powers_mw'][0], 0.75, places=12)
        self.assertAlmostEqual(result['powers_mw'][1], 0.25, places=12)
        self.assertAlmostEqual(result['capacity_bits'], 1.643856, delta=1e-5)

    def test_uniform_split_is_suboptimal(self):
        result = json.loads(run('waterfill', f'--problem={self.problem}', f'--proposed={self.proposal([0.5, 0.5])}'))
        self.assertEqual(result['verdict'], 'suboptimal')
        self.assertAlmostEqual(result['gap_bits'], 0.0588937, delta=1e-6)

        with self.assertRaises(CommandError) as ctx:
            run('waterfill', f'--problem={self.problem}', f'--proposed={self.proposal([0.5, 0.5])}', '--strict')
        self.assertEqual(ctx.exception.returncode, 4)

    def test_oracle_backend_is_optimal(self):
        result = json.loads(run('waterfill', f'--problem={self.problem}', '--ask-backend=oracle-waterfill',
                                '--strict'))
        self.assertEqual(result['verdict'], 'optimal')

    def test_arity_mismatch(self):
        with self.assertRaises(CommandError) as ctx:
            run('waterfill', f'--problem={self.problem}', f'--proposed={self.proposal([1.0])}')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_manifest_written_without_out(self):
        run('waterfill', f'--problem={self.problem}')
        out = self.tmp / 'problem-run'
        manifest = RunManifest.load(out / 'manifest.json')
        self.assertEqual(manifest.command, 'waterfill')
        self.assertEqual(manifest.outputs['solution.json'], serialization.file_digest(out / 'solution.json'))

    def test_manifest_and_rerun(self):
        out = self.tmp / 'out'
        run('waterfill', f'--problem={self.problem}', f'--proposed={self.proposal([0.5, 0.5])}', f'--out={out}')
        self.assertTrue((out / 'verdict.json').is_file())
        run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "again"}')


class RagCommandTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.docs = self.tmp / 'docs.json'
        self.docs.write_text(json.dumps([
            {'doc_id': doc.doc_id, 'source': doc.source, 'text': doc.text} for doc in needle_corpus()
        ]), encoding='utf-8')
        self.index = self.tmp / 'index' / 'needle.json'
        self.questions = self.tmp / 'questions.json'
        self.questions.write_text(json.dumps(question_records()), encoding='utf-8')
        run('rag', 'ingest', f'--docs={self.docs}', f'--index={self.index}', '--chunk-tokens=64', '--overlap=16')

    def transcript(self, responses, no_rag=False):
        index = None if no_rag else ChunkIndex.load(self.index)
        prompts = build_eval_prompts(index, load_questions(self.questions), settings.RADIOBENCH_RAG['TOP_K'],
                                     no_rag=no_rag)
        return replay_transcript(self.tmp / 'answers.jsonl', prompts, responses)

    def evaluate(self, transcript, *extra):
        out = self.tmp / 'eval'
        table = run('rag', 'eval', f'--questions={self.questions}', f'--index={self.index}', '--backend=replay',
                    f'--transcript={transcript}', f'--out={out}', *extra)
        return serialization.read_json(out / 'report.json'), table, out

    def test_ingest_writes_manifest(self):
        manifest = RunManifest.load(self.tmp / 'index' / 'needle.manifest.json')
        self.assertEqual(manifest.parameters['chunk_tokens'], 64)
        self.assertEqual(manifest.outputs['needle.json'], serialization.file_digest(self.index))

    def test_query_ranks_needle_first(self):
        output = run('rag', 'query', f'--index={self.index}', f'--question=Where is the {NEEDLE} defined?',
                     '--k=3')
        self.assertTrue(output.startswith('1. '))
        self.assertIn('doc-037', output.splitlines()[0])

    def test_query_writes_manifest(self):
        output = run('rag', 'query', f'--index={self.index}', f'--question=Where is the {NEEDLE} defined?')
        out = self.tmp / 'index' / 'needle-query'
        self.assertEqual((out / 'hits.txt').read_text(encoding='utf-8'), output)
        manifest = RunManifest.load(out / 'manifest.json')
        self.assertEqual(manifest.config['k'], settings.RADIOBENCH_RAG['TOP_K'])
        self.assertEqual(manifest.summary['inputs']['index'], serialization.file_digest(self.index))
        self.assertEqual(len(output.splitlines()), 2 * manifest.summary['hits'])
        run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "query-again"}')

    def test_all_correct(self):
        report, table, _ = self.evaluate(self.transcript(['Answer: B'] * 5 + ['Answer: C'] * 5))
        self.assertEqual(report['overall_pct'], '100.00')
        self.assertIn('100.00', table)

    def test_hand_counted_mix(self):
        responses = ['B', 'B', '(B)', 'B.', 'A'] + ['C', 'C', 'C', 'not sure', 'D']
        report, _, _ = self.evaluate(self.transcript(responses))
        self.assertEqual(report['categories']['alpha']['accuracy_pct'], '80.00')
        self.assertEqual(report['categories']['beta']['accuracy_pct'], '60.00')
        self.assertEqual(report['overall_pct'], '70.00')
        self.assertEqual(report['unparseable'], 1)

    def test_all_unparseable(self):
        report, _, _ = self.evaluate(self.transcript(['no idea'] * 10))
        self.assertEqual(report['overall_pct'], '0.00')
        self.assertEqual(report['unparseable'], 10)

    def test_without_retrieval(self):
        report, _, _ = self.evaluate(self.transcript(['B'] * 10, no_rag=True), '--no-rag')
        self.assertEqual(report['categories']['alpha']['accuracy_pct'], '100.00')
        self.assertEqual(report['categories']['beta']['accuracy_pct'], '0.00')

    def test_replay_miss_exits_3(self):
        transcript = self.transcript(['B'] * 10, no_rag=True)
        with self.assertRaises(CommandError) as ctx:
            self.evaluate(transcript)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_missing_index_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('rag', 'query', f'--index={self.tmp / "absent.json"}', '--question=x')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_schema_error_exits_2(self):
        self.questions.write_text(json.dumps([{'question': 'q', 'options': ['a'], 'answer': 0}]),
                                  encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self.evaluate(self.tmp / 'unused.jsonl')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_rerun(self):
        _, _, out = self.evaluate(self.transcript(['Answer: B'] * 10))
        run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "again"}')
        run('rerun', f'--manifest={self.tmp / "index" / "needle.manifest.json"}', f'--out={self.tmp / "reindex"}')


class PowerBenchCommandTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def test_oracle_is_optimal_in_every_style(self):
        out = self.tmp / 'bench'
        text = run('power_bench', '--instances=12', '--k-max=6', '--seed=3', f'--out={out}')
        lines = text.strip().splitlines()
        self.assertEqual(lines[0], 'style,instances,optimal,suboptimal,infeasible,unparseable,errors,optimal_pct')
        self.assertEqual(len(lines), 5)
        for line in lines[1:]:
            self.assertTrue(line.endswith(',12,12,0,0,0,0,100.00'), line)
        run('rerun', f'--manifest={out / "manifest.json"}', f'--out={self.tmp / "again"}')

    def test_unparseable_replies_are_tallied(self):
        out = self.tmp / 'bench'
        with mock.patch('apps.llm.services.build_backend', return_value=ScriptedBackend('Use more power.')):
            text = run('power_bench', '--instances=4', '--styles', 'zero-shot', f'--out={out}')
        self.assertEqual(text.strip().splitlines()[1], 'zero-shot,4,0,0,0,4,0,0.00')


class ExportFrameCommandTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def test_export_and_check(self):
        path = self.tmp / 'frame.json'
        run('export_frame', '--truth=H1', '--noise-dbm=-100', '--snr-db=-6', '--n=16', '--seed=42', f'--out={path}')
        data = serialization.read_json(path)
        self.assertEqual(list(data), ['truth', 'noise_dbm', 'snr_db', 'seed', 'samples'])
        self.assertEqual(len(data['samples']), 16)
        self.assertIn('match seed 42', run('export_frame', f'--check={path}'))

    def test_tampered_frame_fails(self):
        path = self.tmp / 'frame.json'
        run('export_frame', '--n=8', '--seed=1', f'--out={path}')
        data = serialization.read_json(path)
        data['samples'][0][0] += 1e-6
        path.write_text(json.dumps(data), encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            run('export_frame', f'--check={path}')
        self.assertEqual(ctx.exception.returncode, 4)
