import json
import os
from unittest import mock

import requests
from django.test import SimpleTestCase

from apps.common.exceptions import (
    BackendError, ConfigError, CredentialMissingError, ReplayMissError, UpstreamPayloadError,
)
from apps.common.testing import NoNetworkMixin, TempDirMixin
from apps.prompting.services import PromptStyle, RenderedPrompt, render_power_prompt, render_sensing_prompt, parse_allocation
from apps.waterfill.services import SubcarrierCnrs, PowerBudget, VerdictKind, validate_external_solution
from .backends import HttpChatBackend, OracleSensingBackend, build_backend
from .serializers import backend_config_from_arg, backend_config_from_dict
from .services import ChatCompletionService, record_session
from .transcripts import BackendConfig, BackendKind, Transcript, read_records

SECRET = 'sk-test-not-a-real-token'
TOKEN_ENV = 'RADIOBENCH_TEST_TOKEN'


class FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError('no json')
        return self._payload


def chat_payload(text):
    return {'choices': [{'message': {'role': 'assistant', 'content': text}}]}


def http_config(**changes):
    values = dict(kind='http', model_name='test-model', endpoint_url='https://llm.invalid/v1/chat/completions',
                  auth_token_env=TOKEN_ENV, max_retries=3, backoff_base_ms=500, concurrency_limit=1)
    values.update(changes)
    return BackendConfig(**values)


def sensing_prompt(values):
    return render_sensing_prompt([], values, PromptStyle.ZERO_SHOT, precision_digits=17)


class OracleBackendTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.config = BackendConfig(kind='oracle-sensing', model_name='oracle', oracle_params={'eta_mw': 1e-10})

    def test_energy_rule(self):
        service = ChatCompletionService(self.config)
        self.assertEqual(service.complete(sensing_prompt([2e-10, 2e-10])), 'H1')
        self.assertEqual(service.complete(sensing_prompt([0.5e-10, 0.5e-10])), 'H0')
        self.assertEqual(service.complete(sensing_prompt([0.5e-10, 2.5e-10])), 'H1')

    def test_needs_threshold(self):
        with self.assertRaises(ConfigError):
            OracleSensingBackend(BackendConfig(kind='oracle-sensing', model_name='oracle'))

    def test_prompt_without_query(self):
        prompt = RenderedPrompt.build('s', 'no observation here', PromptStyle.ZERO_SHOT)
        with self.assertRaises(UpstreamPayloadError):
            ChatCompletionService(self.config).complete(prompt)

    def test_waterfill_oracle_is_optimal(self):
        cnrs, budget = SubcarrierCnrs((2.0, 1.0, 0.01)), PowerBudget(1.0)
        config = BackendConfig(kind='oracle-waterfill', model_name='oracle')
        prompt = render_power_prompt(cnrs, budget, PromptStyle.CHAIN_OF_THOUGHT_PROGRAM)
        response = ChatCompletionService(config).complete(prompt)
        powers = parse_allocation(response, 3)
        verdict = validate_external_solution(powers, cnrs, budget, 1e-8)
        self.assertIs(verdict.kind, VerdictKind.OPTIMAL)


class ReplayTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.oracle = BackendConfig(kind='oracle-sensing', model_name='m', oracle_params={'eta_mw': 1.0})
        self.prompts = [sensing_prompt([float(v)]) for v in (0.5, 2.0, 3.0)]
        self.path = self.tmp / 'session.jsonl'

    def test_record_then_replay(self):
        record_session(self.oracle, self.prompts, self.path)
        records = list(read_records(self.path))
        self.assertEqual([r['kind'] for r in records], ['header', 'exchange', 'exchange', 'exchange'])

        replay = ChatCompletionService(self.oracle.replace(kind='replay', transcript_path=str(self.path)))
        self.assertEqual(replay.complete_many(self.prompts), ['H0', 'H1', 'H1'])

    def test_empty_session(self):
        record_session(self.oracle, [], self.path)
        self.assertEqual([r['kind'] for r in read_records(self.path)], ['header'])

    def test_recorded_response_is_byte_identical(self):
        self.path.write_text(json.dumps({
            'kind': 'exchange', 'prompt_fingerprint': self.prompts[0].fingerprint, 'model_name': 'm',
            'temperature': 0.0, 'system_text': '', 'user_text': '', 'response_text': 'Probably H1 ✓\n',
            'latency_ms': 3, 'timestamp': '2024-01-01T00:00:00+00:00',
        }) + '\n', encoding='utf-8')
        config = self.oracle.replace(kind='replay', transcript_path=str(self.path))
        self.assertEqual(build_backend(config).complete(self.prompts[0]), 'Probably H1 ✓\n')

    def test_first_occurrence_wins(self):
        lines = []
        for text in ('first', 'second'):
            lines.append(json.dumps({
                'kind': 'exchange', 'prompt_fingerprint': 'abc', 'model_name': 'm', 'temperature': 0.0,
                'system_text': '', 'user_text': '', 'response_text': text, 'latency_ms': 0, 'timestamp': '',
            }))
        self.path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        self.assertEqual(Transcript.load(self.path).lookup('abc', 'm', 0.0).response_text, 'first')
        self.assertIsNone(Transcript.load(self.path).lookup('abc', 'm', 0.7))

    def test_miss_names_fingerprint(self):
        record_session(self.oracle, self.prompts[:1], self.path)
        replay = build_backend(self.oracle.replace(kind='replay', transcript_path=str(self.path)))
        with self.assertRaises(ReplayMissError) as ctx:
            replay.complete(self.prompts[2])
        self.assertEqual(ctx.exception.fingerprint, self.prompts[2].fingerprint)
        self.assertIn(self.prompts[2].fingerprint, ctx.exception.message)

    def test_failures_are_recorded(self):
        broken = RenderedPrompt.build('s', 'nothing to sense', PromptStyle.ZERO_SHOT)
        with self.assertRaises(UpstreamPayloadError):
            record_session(self.oracle, [self.prompts[0], broken, self.prompts[1]], self.path)
        kinds = [r['kind'] for r in read_records(self.path)]
        self.assertEqual(kinds.count('exchange'), 2)
        self.assertEqual(kinds.count('error'), 1)


@mock.patch.dict(os.environ, {TOKEN_ENV: SECRET})
class HttpBackendTests(TempDirMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.session = mock.Mock()
        self.sleeps = []
        self.prompt = sensing_prompt([1.0])

    def backend(self, **changes):
        return HttpChatBackend(http_config(**changes), session=self.session, sleep=self.sleeps.append)

    def test_request_shape(self):
        self.session.post.return_value = FakeResponse(payload=chat_payload('H0'))
        self.assertEqual(self.backend().complete(self.prompt), 'H0')
        args, kwargs = self.session.post.call_args
        self.assertEqual(args[0], 'https://llm.invalid/v1/chat/completions')
        self.assertEqual(kwargs['headers']['Authorization'], f'Bearer {SECRET}')
        self.assertEqual([m['role'] for m in kwargs['json']['messages']], ['system', 'user'])
        self.assertEqual(kwargs['json']['model'], 'test-model')
        self.assertEqual(kwargs['timeout'], 60.0)

    def test_retries_with_backoff(self):
        self.session.post.side_effect = [
            FakeResponse(503), requests.Timeout('slow'), FakeResponse(429), FakeResponse(payload=chat_payload('H1')),
        ]
        self.assertEqual(self.backend().complete(self.prompt), 'H1')
        self.assertEqual(self.sleeps, [0.5, 1.0, 2.0])

    def test_retry_bound(self):
        self.session.post.return_value = FakeResponse(500)
        with self.assertRaises(BackendError):
            self.backend(max_retries=2).complete(self.prompt)
        self.assertEqual(self.session.post.call_count, 3)

    def test_dropped_body_is_retried(self):
        self.session.post.side_effect = [
            requests.exceptions.ChunkedEncodingError('connection broken'), FakeResponse(payload=chat_payload('H0')),
        ]
        self.assertEqual(self.backend().complete(self.prompt), 'H0')
        self.assertEqual(self.sleeps, [0.5])

    def test_dropped_body_exhausts_retries(self):
        self.session.post.side_effect = requests.exceptions.ChunkedEncodingError('connection broken')
        with self.assertRaises(BackendError):
            self.backend(max_retries=2).complete(self.prompt)
        self.assertEqual(self.session.post.call_count, 3)

    def test_other_request_errors_become_backend_errors(self):
        for error in (requests.exceptions.TooManyRedirects('loop'), requests.exceptions.InvalidURL('bad'),
                      requests.exceptions.ContentDecodingError('gzip')):
            with self.subTest(error=type(error).__name__):
                self.session.post.reset_mock()
                self.session.post.side_effect = error
                with self.assertRaises(BackendError) as ctx:
                    self.backend().complete(self.prompt)
                self.assertEqual(ctx.exception.details, {'error': type(error).__name__})
                self.assertEqual(self.session.post.call_count, 1)

    def test_client_error_is_not_retried(self):
        self.session.post.return_value = FakeResponse(401)
        with self.assertRaises(BackendError):
            self.backend().complete(self.prompt)
        self.assertEqual(self.session.post.call_count, 1)

    def test_malformed_payload(self):
        self.session.post.return_value = FakeResponse(payload={'choices': []})
        with self.assertRaises(UpstreamPayloadError):
            self.backend().complete(self.prompt)

    def test_missing_credential(self):
        with self.assertRaises(CredentialMissingError):
            self.backend(auth_token_env='RADIOBENCH_TOKEN_THAT_IS_NOT_SET').complete(self.prompt)
        self.session.post.assert_not_called()

    def test_credential_never_serialized(self):
        self.session.post.return_value = FakeResponse(payload=chat_payload('H0'))
        config = http_config()
        path = self.tmp / 'http.jsonl'
        record_session(config, [self.prompt, sensing_prompt([2.0])], path,
                       backend=HttpChatBackend(config, session=self.session, sleep=self.sleeps.append))
        self.assertNotIn(SECRET, path.read_text(encoding='utf-8'))
        self.assertNotIn(SECRET, json.dumps(config.to_dict()))
        self.assertEqual(config.to_dict()['auth_token_env'], TOKEN_ENV)


class CompleteManyTests(NoNetworkMixin, SimpleTestCase):

    def test_order_preserved_under_concurrency(self):
        config = BackendConfig(kind='oracle-sensing', model_name='m', concurrency_limit=4,
                               oracle_params={'eta_mw': 1.0})
        prompts = [sensing_prompt([float(i % 3)]) for i in range(12)]
        expected = ['H1' if i % 3 >= 1 else 'H0' for i in range(12)]
        self.assertEqual(ChatCompletionService(config).complete_many(prompts), expected)

    def test_first_failure_raised(self):
        config = BackendConfig(kind='oracle-sensing', model_name='m', oracle_params={'eta_mw': 1.0})
        broken = RenderedPrompt.build('s', 'x', PromptStyle.ZERO_SHOT)
        service = ChatCompletionService(config)
        with self.assertRaises(UpstreamPayloadError):
            service.complete_many([sensing_prompt([2.0]), broken])
        results = service.complete_many([sensing_prompt([2.0]), broken], return_exceptions=True)
        self.assertEqual(results[0], 'H1')
        self.assertIsInstance(results[1], UpstreamPayloadError)


class BackendConfigTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def test_kind_name(self):
        config = backend_config_from_arg('oracle-waterfill')
        self.assertIs(config.kind, BackendKind.ORACLE_WATERFILL)
        self.assertTrue(config.kind.offline)

    def test_config_file(self):
        path = self.tmp / 'backend.json'
        path.write_text(json.dumps({'kind': 'http', 'model_name': 'x', 'max_retries': 1}), encoding='utf-8')
        config = backend_config_from_arg(str(path))
        self.assertEqual((config.model_name, config.max_retries), ('x', 1))

    def test_replay_needs_transcript(self):
        with self.assertRaises(ConfigError):
            backend_config_from_dict({'kind': 'replay'})
        config = backend_config_from_arg('replay', transcript_path='t.jsonl')
        self.assertEqual(config.transcript_path, 't.jsonl')

    def test_unknown_backend(self):
        with self.assertRaises(ConfigError):
            backend_config_from_arg('carrier-pigeon')
