from django.conf import settings
from rest_framework import serializers

from apps.common.exceptions import ConfigError
from apps.llm.serializers import BackendConfigSerializer
from apps.llm.transcripts import BackendConfig, BackendKind
from apps.prompting.services import MAX_PRECISION_DIGITS, PromptStyle
from apps.signal.services import UINT64_MAX
from apps.waterfill.serializers import ProblemSerializer
from .experiments import (
    PowerBenchConfig, RagEvalConfig, RagIngestConfig, RagQueryConfig, RocConfig, SenseBenchConfig,
    WaterfillConfig,
)

REFERENCE_PRESET = {
    'snr_db_list': [-20.0, -10.0, -6.0, 0.0],
    'noise_dbm': -100.0,
    'pf_target': 0.5,
    'n_samples': 50,
    'few_shot_examples': 20,
    'test_prompts_per_snr': 20,
    'energy_trials': 100,
    'stride': 5,
    'precision_digits': 4,
    'seed': 0,
}

SENSE_BENCH_PRESETS = {
    'reference': REFERENCE_PRESET,
    # every sample at full precision, answered by the energy rule
    'oracle-equality': {**REFERENCE_PRESET, 'stride': 1, 'precision_digits': MAX_PRECISION_DIGITS,
                        'backend': {'kind': BackendKind.ORACLE_SENSING.value}},
}


def _setting(group, key):
    return lambda: getattr(settings, group)[key]


def _backend(attrs, default=None):
    data = attrs.pop('backend', None)
    if data is None:
        return default
    return BackendConfig(**data)


def _probability(value):
    if not 0.0 < value < 1.0:
        raise serializers.ValidationError(f'{value} is not in (0, 1)')
    return value


class SenseBenchConfigSerializer(serializers.Serializer):
    """Sensing benchmark config; stride and digits default to RADIOBENCH_SENSING"""
    snr_db_list = serializers.ListField(child=serializers.FloatField(), min_length=1)
    noise_dbm = serializers.FloatField()
    pf_target = serializers.FloatField(validators=[_probability])
    n_samples = serializers.IntegerField(min_value=1)
    few_shot_examples = serializers.IntegerField(min_value=2)
    test_prompts_per_snr = serializers.IntegerField(min_value=1)
    energy_trials = serializers.IntegerField(min_value=1)
    stride = serializers.IntegerField(min_value=1, default=_setting('RADIOBENCH_SENSING', 'STRIDE'))
    precision_digits = serializers.IntegerField(min_value=1, max_value=MAX_PRECISION_DIGITS,
                                                default=_setting('RADIOBENCH_SENSING', 'PRECISION_DIGITS'))
    seed = serializers.IntegerField(min_value=0, max_value=UINT64_MAX, default=0)
    backend = BackendConfigSerializer(required=False, allow_null=True)
    template_path = serializers.CharField(allow_null=True, default=None)

    def validate_few_shot_examples(self, value):
        if value % 2:
            raise serializers.ValidationError('Must be even: examples are split evenly between H0 and H1')
        return value

    def create(self, validated_data):
        backend = _backend(validated_data) or BackendConfig.from_settings()
        return SenseBenchConfig(backend=backend, **validated_data)


class RocConfigSerializer(serializers.Serializer):
    noise_dbm = serializers.FloatField()
    snr_db = serializers.FloatField()
    n = serializers.IntegerField(min_value=1)
    pf_grid = serializers.ListField(child=serializers.FloatField(validators=[_probability]), min_length=1)
    trials = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0, max_value=UINT64_MAX, default=0)

    def create(self, validated_data):
        return RocConfig(**validated_data)


class WaterfillConfigSerializer(ProblemSerializer):
    """A problem plus either a proposed allocation or a backend to ask for one"""
    tol = serializers.FloatField(min_value=0.0, default=lambda: settings.RADIOBENCH_WATERFILL_TOL)
    proposed_mw = serializers.ListField(child=serializers.FloatField(), allow_null=True, default=None)
    backend = BackendConfigSerializer(required=False, allow_null=True)
    style = serializers.ChoiceField(choices=[style.value for style in PromptStyle],
                                    default=PromptStyle.CHAIN_OF_THOUGHT_PROGRAM.value)
    template_path = serializers.CharField(allow_null=True, default=None)

    def validate(self, attrs):
        proposed = attrs.get('proposed_mw')
        if proposed is not None and len(proposed) != len(attrs['cnrs']):
            raise serializers.ValidationError({'proposed_mw': 'Must have one power per CNR'})
        return attrs

    def create(self, validated_data):
        return WaterfillConfig(backend=_backend(validated_data), **validated_data)


class RagIngestConfigSerializer(serializers.Serializer):
    docs_path = serializers.CharField()
    chunk_tokens = serializers.IntegerField(min_value=1, default=_setting('RADIOBENCH_RAG', 'CHUNK_TOKENS'))
    overlap_tokens = serializers.IntegerField(min_value=0, default=_setting('RADIOBENCH_RAG', 'OVERLAP_TOKENS'))
    k1 = serializers.FloatField(min_value=0.0, default=_setting('RADIOBENCH_RAG', 'BM25_K1'))
    b = serializers.FloatField(min_value=0.0, max_value=1.0, default=_setting('RADIOBENCH_RAG', 'BM25_B'))
    index_name = serializers.CharField(default='index.json')

    def create(self, validated_data):
        return RagIngestConfig(**validated_data)


class RagQueryConfigSerializer(serializers.Serializer):
    index_path = serializers.CharField()
    question = serializers.CharField()
    k = serializers.IntegerField(min_value=1, default=_setting('RADIOBENCH_RAG', 'TOP_K'))

    def create(self, validated_data):
        return RagQueryConfig(**validated_data)


class RagEvalConfigSerializer(serializers.Serializer):
    questions_path = serializers.CharField()
    k = serializers.IntegerField(min_value=1, default=_setting('RADIOBENCH_RAG', 'TOP_K'))
    backend = BackendConfigSerializer(required=False, allow_null=True)
    index_path = serializers.CharField(allow_null=True, default=None)
    no_rag = serializers.BooleanField(default=False)
    template_path = serializers.CharField(allow_null=True, default=None)

    def create(self, validated_data):
        backend = _backend(validated_data) or BackendConfig.from_settings()
        return RagEvalConfig(backend=backend, **validated_data)


class PowerBenchConfigSerializer(serializers.Serializer):
    instances = serializers.IntegerField(min_value=1, default=20)
    k_max = serializers.IntegerField(min_value=1, default=8)
    styles = serializers.ListField(
        child=serializers.ChoiceField(choices=[style.value for style in PromptStyle]),
        min_length=1, default=lambda: [style.value for style in PromptStyle],
    )
    seed = serializers.IntegerField(min_value=0, max_value=UINT64_MAX, default=0)
    tol = serializers.FloatField(min_value=0.0, default=lambda: settings.RADIOBENCH_WATERFILL_TOL)
    backend = BackendConfigSerializer(required=False, allow_null=True)
    template_path = serializers.CharField(allow_null=True, default=None)

    def create(self, validated_data):
        backend = _backend(validated_data) or BackendConfig.from_settings(kind=BackendKind.ORACLE_WATERFILL)
        return PowerBenchConfig(backend=backend, **validated_data)


CONFIG_SERIALIZERS = {
    'sense_bench': SenseBenchConfigSerializer,
    'roc': RocConfigSerializer,
    'waterfill': WaterfillConfigSerializer,
    'rag_ingest': RagIngestConfigSerializer,
    'rag_query': RagQueryConfigSerializer,
    'rag_eval': RagEvalConfigSerializer,
    'power_bench': PowerBenchConfigSerializer,
}


def experiment_config(command: str, data: dict):
    """Validate a config mapping for `command` into its config object"""
    try:
        serializer_class = CONFIG_SERIALIZERS[command]
    except KeyError:
        raise ConfigError(f"Unknown experiment {command!r}")
    if not isinstance(data, dict):
        raise ConfigError(f"The {command} config must be a JSON object")
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigError(f"Invalid {command} config", serializer.errors)
    return serializer.save()
