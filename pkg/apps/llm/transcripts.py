"""Backend configuration and the JSON-lines transcript of chat exchanges."""
import dataclasses
import enum
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from django.conf import settings
from django.utils import timezone

import radiobench
from apps.common import serialization
from apps.common.exceptions import ConfigError, InvalidParameterError

logger = logging.getLogger(__name__)

RECORD_HEADER = 'header'
RECORD_EXCHANGE = 'exchange'
RECORD_ERROR = 'error'


class BackendKind(str, enum.Enum):
    HTTP = 'http'
    REPLAY = 'replay'
    ORACLE_SENSING = 'oracle-sensing'
    ORACLE_WATERFILL = 'oracle-waterfill'

    @property
    def offline(self) -> bool:
        return self is not BackendKind.HTTP


@dataclass(frozen=True)
class BackendConfig:
    """Everything needed to reach a chat backend; the credential itself is only named"""
    kind: BackendKind
    model_name: str
    endpoint_url: str = ''
    auth_token_env: str = ''
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_ms: int = 60000
    max_retries: int = 3
    backoff_base_ms: int = 500
    concurrency_limit: int = 4
    transcript_path: Optional[str] = None
    oracle_params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'kind', BackendKind(self.kind))
        if self.concurrency_limit < 1:
            raise InvalidParameterError(f"concurrency_limit must be at least 1, got {self.concurrency_limit}")
        if self.temperature < 0:
            raise InvalidParameterError(f"temperature must be nonnegative, got {self.temperature}")
        if self.max_retries < 0:
            raise InvalidParameterError(f"max_retries must be nonnegative, got {self.max_retries}")

    @classmethod
    def from_settings(cls, **overrides) -> 'BackendConfig':
        llm = settings.RADIOBENCH_LLM
        values = {
            'kind': llm['BACKEND'],
            'model_name': llm['MODEL_NAME'],
            'endpoint_url': llm['ENDPOINT_URL'],
            'auth_token_env': llm['AUTH_TOKEN_ENV'],
            'temperature': llm['TEMPERATURE'],
            'max_tokens': llm['MAX_TOKENS'],
            'timeout_ms': llm['TIMEOUT_MS'],
            'max_retries': llm['MAX_RETRIES'],
            'backoff_base_ms': llm['BACKOFF_BASE_MS'],
            'concurrency_limit': llm['CONCURRENCY_LIMIT'],
        }
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> 'BackendConfig':
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data['kind'] = self.kind.value
        data['oracle_params'] = dict(self.oracle_params)
        return data


@dataclass(frozen=True)
class ChatExchange:
    system_text: str
    user_text: str
    response_text: str
    model_name: str
    temperature: float
    latency_ms: int
    prompt_fingerprint: str
    timestamp: str

    @property
    def key(self) -> Tuple[str, str, float]:
        return self.prompt_fingerprint, self.model_name, self.temperature

    def to_record(self) -> dict:
        return {
            'kind': RECORD_EXCHANGE,
            'prompt_fingerprint': self.prompt_fingerprint,
            'model_name': self.model_name,
            'temperature': self.temperature,
            'system_text': self.system_text,
            'user_text': self.user_text,
            'response_text': self.response_text,
            'latency_ms': self.latency_ms,
            'timestamp': self.timestamp,
        }

    @classmethod
    def from_record(cls, record: dict) -> 'ChatExchange':
        return cls(
            system_text=record['system_text'],
            user_text=record['user_text'],
            response_text=record['response_text'],
            model_name=record['model_name'],
            temperature=float(record['temperature']),
            latency_ms=int(record['latency_ms']),
            prompt_fingerprint=record['prompt_fingerprint'],
            timestamp=record['timestamp'],
        )


def read_records(path) -> Iterator[dict]:
    try:
        with open(path, encoding='utf-8') as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise ConfigError(f"Invalid transcript line {number} in {path}: {e}")
    except FileNotFoundError:
        raise ConfigError(f"Transcript not found: {path}")


class Transcript:
    """Recorded exchanges, looked up by (prompt fingerprint, model, temperature)"""

    def __init__(self, exchanges: List[ChatExchange]):
        self.exchanges = list(exchanges)
        self._by_key = {}
        for exchange in self.exchanges:
            # first occurrence wins
            self._by_key.setdefault(exchange.key, exchange)

    @classmethod
    def load(cls, path) -> 'Transcript':
        exchanges = []
        for record in read_records(path):
            if record.get('kind', RECORD_EXCHANGE) != RECORD_EXCHANGE:
                continue
            try:
                exchanges.append(ChatExchange.from_record(record))
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"Malformed exchange in {path}: {e}")
        logger.debug("Loaded %d exchanges from %s", len(exchanges), path)
        return cls(exchanges)

    def lookup(self, fingerprint: str, model_name: str, temperature: float) -> Optional[ChatExchange]:
        return self._by_key.get((fingerprint, model_name, float(temperature)))

    def __len__(self):
        return len(self.exchanges)


class TranscriptWriter:
    """Appends exchanges to a JSON-lines file; a header line describes the backend"""

    def __init__(self, path, config: BackendConfig):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._handle = open(self.path, 'w', encoding='utf-8', newline='\n')
        self._write({'kind': RECORD_HEADER, 'toolkit_version': radiobench.__version__, 'backend': config.to_dict()})

    def _write(self, record: dict):
        with self._lock:
            self._handle.write(serialization.dumps(record) + '\n')
            self._handle.flush()

    def append(self, exchange: ChatExchange):
        self._write(exchange.to_record())

    def append_error(self, fingerprint: str, config: BackendConfig, error):
        self._write({
            'kind': RECORD_ERROR,
            'prompt_fingerprint': fingerprint,
            'model_name': config.model_name,
            'temperature': config.temperature,
            'error_code': getattr(error, 'code', type(error).__name__),
            'message': str(error),
            'timestamp': timezone.now().isoformat(),
        })

    def close(self):
        with self._lock:
            self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
