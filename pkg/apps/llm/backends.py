"""Chat backends: a live HTTP chat-completion client and offline replay/oracle stand-ins."""
import logging
import time
from typing import Callable, Optional

import requests
from decouple import config as env

from apps.common.exceptions import (
    BackendError, ConfigError, CredentialMissingError, ReplayMissError, UpstreamPayloadError,
)
from apps.prompting.services import RenderedPrompt, extract_power_problem, extract_query_observation
from apps.signal.services import Hypothesis, mean_energy
from apps.waterfill.services import waterfill
from .transcripts import BackendConfig, BackendKind, Transcript

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = 429
TRANSIENT_ERRORS = (requests.Timeout, requests.ConnectionError, requests.exceptions.ChunkedEncodingError)


class ChatBackend:
    def __init__(self, config: BackendConfig):
        self.config = config

    def complete(self, prompt: RenderedPrompt) -> str:
        raise NotImplementedError


class HttpChatBackend(ChatBackend):
    """OpenAI-style chat completions over HTTP with bounded exponential backoff"""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        super().__init__(config)
        if not config.endpoint_url:
            raise ConfigError("The http backend needs an endpoint_url")
        self.session = session or requests.Session()
        self.sleep = sleep

    def _headers(self) -> dict:
        token = env(self.config.auth_token_env, default='') if self.config.auth_token_env else ''
        if not token:
            raise CredentialMissingError(
                f"Credential variable {self.config.auth_token_env or '(unset)'} is not set",
                {'auth_token_env': self.config.auth_token_env},
            )
        return {
            'Authorization': f'Bearer {token}',
            'Content-Type': 'application/json'
        }

    def _payload(self, prompt: RenderedPrompt) -> dict:
        return {
            'model': self.config.model_name,
            'messages': [
                {'role': 'system', 'content': prompt.system_text},
                {'role': 'user', 'content': prompt.user_text},
            ],
            'temperature': self.config.temperature,
            'max_tokens': self.config.max_tokens,
        }

    @staticmethod
    def _content(data) -> str:
        try:
            content = data['choices'][0]['message']['content']
        except (KeyError, IndexError, TypeError):
            raise UpstreamPayloadError("Response carries no choices[0].message.content")
        if not isinstance(content, str):
            raise UpstreamPayloadError("Response content is not a string")
        return content

    def complete(self, prompt: RenderedPrompt) -> str:
        headers = self._headers()
        payload = self._payload(prompt)
        timeout = self.config.timeout_ms / 1000.0
        last_error = None

        for attempt in range(self.config.max_retries + 1):
            if attempt > 0:
                # backoff_base_ms * 2^failed, failed being the 0-based index of the attempt that just failed
                failed = attempt - 1
                delay_ms = self.config.backoff_base_ms * 2 ** failed
                logger.warning("Retrying %s in %d ms (retry %d/%d): %s", prompt.fingerprint[:12], delay_ms,
                               attempt, self.config.max_retries, last_error)
                self.sleep(delay_ms / 1000.0)
            try:
                response = self.session.post(self.config.endpoint_url, json=payload, headers=headers,
                                             timeout=timeout)
            except TRANSIENT_ERRORS as e:
                last_error = f"{type(e).__name__}: {e}"
                continue
            except requests.RequestException as e:
                raise BackendError(f"Chat request failed: {type(e).__name__}: {e}", {'error': type(e).__name__})

            if response.status_code == RETRYABLE_STATUS or response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code >= 400:
                raise BackendError(f"Chat endpoint returned HTTP {response.status_code}",
                                   {'status': response.status_code})
            try:
                data = response.json()
            except ValueError:
                raise UpstreamPayloadError("Chat endpoint returned invalid JSON")
            return self._content(data)

        raise BackendError(
            f"Chat request failed after {self.config.max_retries + 1} attempts: {last_error}",
            {'attempts': self.config.max_retries + 1},
        )


class ReplayBackend(ChatBackend):
    """Serves recorded responses; never touches the network"""

    def __init__(self, config: BackendConfig, transcript: Optional[Transcript] = None):
        super().__init__(config)
        if transcript is None:
            if not config.transcript_path:
                raise ConfigError("The replay backend needs a transcript_path")
            transcript = Transcript.load(config.transcript_path)
        self.transcript = transcript

    def complete(self, prompt: RenderedPrompt) -> str:
        exchange = self.transcript.lookup(prompt.fingerprint, self.config.model_name, self.config.temperature)
        if exchange is None:
            raise ReplayMissError(prompt.fingerprint, self.config.model_name, self.config.temperature)
        return exchange.response_text


class OracleSensingBackend(ChatBackend):
    """Answers sensing prompts with the energy rule mean(query) >= eta"""

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        if 'eta_mw' not in config.oracle_params:
            raise ConfigError("The oracle-sensing backend needs oracle_params.eta_mw")
        self.eta_mw = float(config.oracle_params['eta_mw'])

    def complete(self, prompt: RenderedPrompt) -> str:
        values = extract_query_observation(prompt.user_text)
        if not values:
            raise UpstreamPayloadError("Prompt carries no query observation",
                                       {'prompt_fingerprint': prompt.fingerprint})
        return (Hypothesis.H1 if mean_energy(values) >= self.eta_mw else Hypothesis.H0).value


class OracleWaterfillBackend(ChatBackend):
    """Answers power-allocation prompts with the water-filling solution"""

    def complete(self, prompt: RenderedPrompt) -> str:
        problem = extract_power_problem(prompt.user_text)
        if problem is None:
            raise UpstreamPayloadError("Prompt carries no power-allocation instance",
                                       {'prompt_fingerprint': prompt.fingerprint})
        allocation = waterfill(*problem)
        return "ALLOCATION: " + ', '.join(repr(p) for p in allocation.powers_mw)


BACKENDS = {
    BackendKind.HTTP: HttpChatBackend,
    BackendKind.REPLAY: ReplayBackend,
    BackendKind.ORACLE_SENSING: OracleSensingBackend,
    BackendKind.ORACLE_WATERFILL: OracleWaterfillBackend,
}


def build_backend(config: BackendConfig) -> ChatBackend:
    return BACKENDS[config.kind](config)
