import logging

from rest_framework import status
from rest_framework.views import exception_handler

from apps.common.responses import toolkit_error_response

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_VALIDATION = 4


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit.

    `code` is the stable identifier used in REST error envelopes, `exit_code` the
    process status management commands exit with.
    """
    code = 'TOOLKIT_ERROR'
    exit_code = 1
    http_status = status.HTTP_400_BAD_REQUEST

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class InvalidParameterError(ToolkitError):
    code = 'INVALID_PARAMETER'
    exit_code = EXIT_CONFIG


class DomainError(ToolkitError):
    """Argument outside the mathematical domain of a function."""
    code = 'DOMAIN_ERROR'
    exit_code = EXIT_CONFIG


class LengthMismatchError(ToolkitError):
    code = 'LENGTH_MISMATCH'
    exit_code = EXIT_CONFIG


class ConfigError(ToolkitError):
    code = 'CONFIG_ERROR'
    exit_code = EXIT_CONFIG


class DatasetSchemaError(ConfigError):
    """Record-level schema violations; `details` maps record numbers to field errors."""
    code = 'DATASET_SCHEMA'


class DuplicateDocumentError(ConfigError):
    code = 'DUPLICATE_DOCUMENT'


class EmptyCorpusError(ConfigError):
    code = 'EMPTY_CORPUS'


class MissingIndexError(ConfigError):
    code = 'MISSING_INDEX'
    http_status = status.HTTP_404_NOT_FOUND


class BackendError(ToolkitError):
    code = 'BACKEND_ERROR'
    exit_code = EXIT_BACKEND
    http_status = status.HTTP_502_BAD_GATEWAY


class ReplayMissError(BackendError):
    code = 'REPLAY_MISS'

    def __init__(self, fingerprint, model_name, temperature):
        super().__init__(
            f"No recorded response for prompt {fingerprint} "
            f"(model={model_name}, temperature={temperature})",
            {'prompt_fingerprint': fingerprint},
        )
        self.fingerprint = fingerprint


class CredentialMissingError(BackendError):
    code = 'CREDENTIAL_MISSING'


class UpstreamPayloadError(BackendError):
    code = 'UPSTREAM_PAYLOAD'


class AllocationParseError(ToolkitError):
    """A response did not carry a usable `ALLOCATION:` line."""
    code = 'ALLOCATION_PARSE'
    exit_code = EXIT_VALIDATION


class MissingMarkerError(AllocationParseError):
    code = 'ALLOCATION_MISSING_MARKER'


class AllocationArityError(AllocationParseError):
    code = 'ALLOCATION_ARITY'


class NonNumericTokenError(AllocationParseError):
    code = 'ALLOCATION_NON_NUMERIC'


class ValidationFailure(ToolkitError):
    code = 'VALIDATION_FAILED'
    exit_code = EXIT_VALIDATION


def toolkit_exception_handler(exc, context):
    """DRF exception handler rendering ToolkitError in the standard error envelope"""
    if isinstance(exc, ToolkitError):
        logger.warning("%s: %s", exc.code, exc.message)
        return toolkit_error_response(exc)
    return exception_handler(exc, context)
