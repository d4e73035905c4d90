import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Union

from django.utils import timezone

from apps.common.exceptions import BackendError
from apps.prompting.services import RenderedPrompt
from .backends import ChatBackend, build_backend
from .transcripts import BackendConfig, ChatExchange, TranscriptWriter

logger = logging.getLogger(__name__)


class ChatCompletionService:
    """Sends rendered prompts to the configured backend, optionally recording every exchange"""

    def __init__(self, config: BackendConfig, recorder: Optional[TranscriptWriter] = None,
                 backend: Optional[ChatBackend] = None):
        self.config = config
        self.recorder = recorder
        self.backend = backend or build_backend(config)

    def complete(self, prompt: RenderedPrompt) -> str:
        started = time.perf_counter()
        try:
            response = self.backend.complete(prompt)
        except BackendError as e:
            logger.warning("Backend %s failed on prompt %s: %s", self.config.kind.value, prompt.fingerprint[:12],
                           e.message)
            if self.recorder is not None:
                self.recorder.append_error(prompt.fingerprint, self.config, e)
            raise

        exchange = ChatExchange(
            system_text=prompt.system_text,
            user_text=prompt.user_text,
            response_text=response,
            model_name=self.config.model_name,
            temperature=self.config.temperature,
            latency_ms=int((time.perf_counter() - started) * 1000),
            prompt_fingerprint=prompt.fingerprint,
            timestamp=timezone.now().isoformat(),
        )
        if self.recorder is not None:
            self.recorder.append(exchange)
        return response

    def complete_many(self, prompts: Sequence[RenderedPrompt],
                      return_exceptions: bool = False) -> List[Union[str, BackendError]]:
        """Responses in prompt order, with at most concurrency_limit requests in flight.

        With `return_exceptions` a failed prompt yields its BackendError in place of a
        response; otherwise the first failure in prompt order is raised.
        """
        def run(prompt):
            try:
                return self.complete(prompt)
            except BackendError as e:
                return e

        if self.config.concurrency_limit > 1 and len(prompts) > 1:
            with ThreadPoolExecutor(max_workers=self.config.concurrency_limit) as pool:
                results = list(pool.map(run, prompts))
        else:
            results = [run(prompt) for prompt in prompts]

        if not return_exceptions:
            for result in results:
                if isinstance(result, BackendError):
                    raise result
        return results


def record_session(config: BackendConfig, prompts: Sequence[RenderedPrompt], path,
                   backend: Optional[ChatBackend] = None) -> Path:
    """Run every prompt through the backend into a replayable transcript.

    Failures are written as error lines; the first one is raised after all prompts ran.
    """
    path = Path(path)
    with TranscriptWriter(path, config) as writer:
        service = ChatCompletionService(config, recorder=writer, backend=backend)
        results = service.complete_many(prompts, return_exceptions=True)
    failures = [result for result in results if isinstance(result, BackendError)]
    logger.info("Recorded %d exchanges (%d failed) to %s", len(results) - len(failures), len(failures), path)
    if failures:
        raise failures[0]
    return path
