import socket

from django.conf import settings
from django.test import SimpleTestCase
from rest_framework.test import APISimpleTestCase

import radiobench
from .exceptions import ConfigError, ReplayMissError, ValidationFailure, toolkit_exception_handler
from .serialization import dumps, file_digest, read_json, sha256_hex, write_text
from .testing import NetworkAccessAttempted, NoNetworkMixin, TempDirMixin


class SerializationTests(TempDirMixin, SimpleTestCase):

    def test_floats_keep_every_bit(self):
        self.assertEqual(dumps(0.1), '0.10000000000000001')
        self.assertEqual(dumps(2.0), '2.0')
        self.assertEqual(float(dumps(1 / 3)), 1 / 3)

    def test_key_order_and_nesting(self):
        self.assertEqual(dumps({'b': [1, None, True], 'a': 'é'}), '{"b": [1, null, true], "a": "é"}')

    def test_non_finite_rejected(self):
        with self.assertRaises(ValueError):
            dumps(float('nan'))

    def test_write_text_returns_digest(self):
        path = self.tmp / 'nested' / 'out.txt'
        digest = write_text(path, 'line\n')
        self.assertEqual(digest, sha256_hex('line\n'))
        self.assertEqual(file_digest(path), digest)

    def test_read_json_errors(self):
        with self.assertRaises(ConfigError):
            read_json(self.tmp / 'absent.json')
        broken = self.tmp / 'broken.json'
        broken.write_text('{', encoding='utf-8')
        with self.assertRaises(ConfigError):
            read_json(broken)


class ExceptionTests(SimpleTestCase):

    def test_exit_codes(self):
        self.assertEqual(ConfigError('x').exit_code, 2)
        self.assertEqual(ReplayMissError('abc', 'm', 0.0).exit_code, 3)
        self.assertEqual(ValidationFailure('x').exit_code, 4)

    def test_envelope(self):
        response = toolkit_exception_handler(ReplayMissError('abc', 'm', 0.0), {})
        self.assertEqual(response.status_code, 502)
        self.assertFalse(response.data['success'])
        self.assertEqual(response.data['error']['code'], 'REPLAY_MISS')
        self.assertEqual(response.data['error']['details'], {'prompt_fingerprint': 'abc'})


class NoNetworkTests(NoNetworkMixin, SimpleTestCase):

    def test_connections_refused(self):
        with self.assertRaises(NetworkAccessAttempted):
            socket.create_connection(('example.com', 80))


class HealthCheckTests(NoNetworkMixin, APISimpleTestCase):

    def test_health(self):
        response = self.client.get('/system/health/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['data']['version'], radiobench.__version__)
        self.assertEqual(response.json()['data']['llm_backend'], settings.RADIOBENCH_LLM['BACKEND'])


class SchemaTests(NoNetworkMixin, APISimpleTestCase):

    def test_schema_lists_endpoints(self):
        response = self.client.get('/api/schema/', {'format': 'json'})
        self.assertEqual(response.status_code, 200)
        paths = response.json()['paths']
        for route in ('/detector/threshold', '/waterfill/solve', '/waterfill/validate', '/rag/retrieve'):
            self.assertIn(route, paths)
        parameters = {p['name'] for p in paths['/detector/threshold']['get']['parameters']}
        self.assertTrue({'pf_target', 'n', 'noise_dbm', 'snr_db'} <= parameters)
