"""Experiment configurations and the run manifest every command leaves behind."""
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import radiobench
from apps.common import serialization
from apps.common.exceptions import ConfigError, InvalidParameterError
from apps.llm.transcripts import BackendConfig

MANIFEST_NAME = 'manifest.json'


def _plain(value):
    if isinstance(value, BackendConfig):
        return value.to_dict()
    if isinstance(value, tuple):
        return [_plain(item) for item in value]
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    return value


class ExperimentConfig:
    """Mixin giving config dataclasses a JSON-ready snapshot in field order"""

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _at_least_one(**counts):
    for name, value in counts.items():
        if int(value) < 1:
            raise InvalidParameterError(f"{name} must be at least 1, got {value}")


@dataclass(frozen=True)
class SenseBenchConfig(ExperimentConfig):
    snr_db_list: Tuple[float, ...]
    noise_dbm: float
    pf_target: float
    n_samples: int
    few_shot_examples: int
    test_prompts_per_snr: int
    energy_trials: int
    stride: int
    precision_digits: int
    seed: int
    backend: BackendConfig
    template_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'snr_db_list', tuple(float(s) for s in self.snr_db_list))
        if not self.snr_db_list:
            raise InvalidParameterError("snr_db_list must not be empty")
        _at_least_one(n_samples=self.n_samples, few_shot_examples=self.few_shot_examples,
                      test_prompts_per_snr=self.test_prompts_per_snr, energy_trials=self.energy_trials,
                      stride=self.stride)
        if self.few_shot_examples % 2:
            raise InvalidParameterError(
                f"few_shot_examples is split evenly between H0 and H1, got {self.few_shot_examples}"
            )

    @property
    def oracle_equality_mode(self) -> bool:
        """Prompts carry every sample at full precision, so an energy-rule backend sees the exact statistic"""
        return self.stride == 1 and self.precision_digits == 17


@dataclass(frozen=True)
class RocConfig(ExperimentConfig):
    noise_dbm: float
    snr_db: float
    n: int
    pf_grid: Tuple[float, ...]
    trials: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, 'pf_grid', tuple(float(p) for p in self.pf_grid))
        if not self.pf_grid:
            raise InvalidParameterError("pf_grid must not be empty")
        _at_least_one(n=self.n, trials=self.trials)


@dataclass(frozen=True)
class WaterfillConfig(ExperimentConfig):
    cnrs: Tuple[float, ...]
    budget_mw: float
    tol: float
    proposed_mw: Optional[Tuple[float, ...]] = None
    backend: Optional[BackendConfig] = None
    style: str = 'cot-program'
    template_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'cnrs', tuple(float(c) for c in self.cnrs))
        if self.proposed_mw is not None:
            object.__setattr__(self, 'proposed_mw', tuple(float(p) for p in self.proposed_mw))
        if self.proposed_mw is not None and self.backend is not None:
            raise InvalidParameterError("Give either a proposed allocation or a backend to ask, not both")


@dataclass(frozen=True)
class RagIngestConfig(ExperimentConfig):
    docs_path: str
    chunk_tokens: int
    overlap_tokens: int
    k1: float
    b: float
    index_name: str = 'index.json'


@dataclass(frozen=True)
class RagQueryConfig(ExperimentConfig):
    index_path: str
    question: str
    k: int

    def __post_init__(self):
        _at_least_one(k=self.k)
        if not self.question.strip():
            raise InvalidParameterError("The question must not be blank")


@dataclass(frozen=True)
class RagEvalConfig(ExperimentConfig):
    questions_path: str
    k: int
    backend: BackendConfig
    index_path: Optional[str] = None
    no_rag: bool = False
    template_path: Optional[str] = None

    def __post_init__(self):
        _at_least_one(k=self.k)
        if not self.no_rag and not self.index_path:
            raise ConfigError("An index is required unless no_rag is set")


@dataclass(frozen=True)
class PowerBenchConfig(ExperimentConfig):
    instances: int
    k_max: int
    styles: Tuple[str, ...]
    seed: int
    tol: float
    backend: BackendConfig
    template_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'styles', tuple(self.styles))
        _at_least_one(instances=self.instances, k_max=self.k_max)
        if not self.styles:
            raise InvalidParameterError("At least one prompt style is required")


@dataclass
class RunManifest:
    """What a run needs to be reproduced, and digests of what it produced"""
    command: str
    config: dict
    parameters: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    toolkit_version: str = radiobench.__version__

    def record_output(self, out_dir, name: str, text: str) -> str:
        digest = serialization.write_text(Path(out_dir) / name, text)
        self.outputs[name] = digest
        return digest

    def to_dict(self) -> dict:
        return {
            'command': self.command,
            'toolkit_version': self.toolkit_version,
            'config': self.config,
            'parameters': self.parameters,
            'seeds': self.seeds,
            'summary': self.summary,
            'outputs': dict(sorted(self.outputs.items())),
        }

    def write(self, path) -> Path:
        path = Path(path)
        serialization.write_text(path, serialization.dumps(self.to_dict()) + '\n')
        return path

    @classmethod
    def load(cls, path) -> 'RunManifest':
        data = serialization.read_json(path)
        try:
            return cls(
                command=data['command'],
                config=data['config'],
                parameters=data.get('parameters', {}),
                seeds=data.get('seeds', {}),
                summary=data.get('summary', {}),
                outputs=dict(data['outputs']),
                toolkit_version=data.get('toolkit_version', ''),
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Malformed run manifest {path}: {e}")
