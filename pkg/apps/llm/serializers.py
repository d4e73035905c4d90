from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from apps.common import serialization
from apps.common.exceptions import ConfigError
from .transcripts import BackendConfig, BackendKind


def _llm_default(key):
    return lambda: settings.RADIOBENCH_LLM[key]


class BackendConfigSerializer(serializers.Serializer):
    """Backend config file; omitted fields take the RADIOBENCH_LLM defaults"""
    kind = serializers.ChoiceField(choices=[kind.value for kind in BackendKind])
    model_name = serializers.CharField(default=_llm_default('MODEL_NAME'))
    endpoint_url = serializers.CharField(allow_blank=True, default=_llm_default('ENDPOINT_URL'))
    auth_token_env = serializers.CharField(allow_blank=True, default=_llm_default('AUTH_TOKEN_ENV'))
    temperature = serializers.FloatField(min_value=0.0, default=_llm_default('TEMPERATURE'))
    max_tokens = serializers.IntegerField(min_value=1, default=_llm_default('MAX_TOKENS'))
    timeout_ms = serializers.IntegerField(min_value=1, default=_llm_default('TIMEOUT_MS'))
    max_retries = serializers.IntegerField(min_value=0, default=_llm_default('MAX_RETRIES'))
    backoff_base_ms = serializers.IntegerField(min_value=0, default=_llm_default('BACKOFF_BASE_MS'))
    concurrency_limit = serializers.IntegerField(min_value=1, default=_llm_default('CONCURRENCY_LIMIT'))
    transcript_path = serializers.CharField(allow_null=True, default=None)
    oracle_params = serializers.DictField(child=serializers.FloatField(), default=dict)

    def validate(self, attrs):
        if attrs['kind'] == BackendKind.REPLAY.value and not attrs.get('transcript_path'):
            raise serializers.ValidationError({'transcript_path': 'Required for the replay backend'})
        return attrs


def backend_config_from_dict(data) -> BackendConfig:
    serializer = BackendConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError('Invalid backend config', serializer.errors)
    return BackendConfig(**serializer.validated_data)


def backend_config_from_arg(value: str, **overrides) -> BackendConfig:
    """A backend kind name, or the path of a backend config JSON file"""
    if value in {kind.value for kind in BackendKind}:
        data = {'kind': value}
    elif Path(value).is_file():
        data = serialization.read_json(value)
        if not isinstance(data, dict):
            raise ConfigError(f"Backend config {value} must hold a JSON object")
    else:
        raise ConfigError(f"Unknown backend {value!r}: expected a kind name or a config file")
    data = {**data, **{key: item for key, item in overrides.items() if item is not None}}
    return backend_config_from_dict(data)
