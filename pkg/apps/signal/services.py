"""Baseband observations for the binary spectrum-sensing hypothesis test.

Random variates come from a counter-based SplitMix64 stream: output i of a stream with
key k is mix64(k + (i + 1) * GOLDEN). Two uniforms per complex sample feed Box-Muller,
so sample j of a frame depends only on the frame seed and j. Frames of different
lengths with the same seed therefore share their prefix, and a batch of frames can be
generated in one vectorized pass.

Powers are linear milliwatts throughout; dBm only appears at I/O boundaries.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from apps.common.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

UINT64_MAX = 2 ** 64 - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_TWO_POW_53 = float(2 ** 53)

# Child-stream labels under a frame seed
NOISE_STREAM = 0
SIGNAL_STREAM = 1


class Hypothesis(str, enum.Enum):
    H0 = 'H0'  # primary signal absent
    H1 = 'H1'  # primary signal present

    def __str__(self):
        return self.value


def dbm_to_linear(dbm: float) -> float:
    """Convert dBm to milliwatts"""
    dbm = float(dbm)
    if not math.isfinite(dbm):
        raise InvalidParameterError(f"dBm value must be finite, got {dbm}")
    return 10.0 ** (dbm / 10.0)


def linear_to_dbm(mw: float) -> float:
    mw = float(mw)
    if not (mw > 0 and math.isfinite(mw)):
        raise InvalidParameterError(f"Power must be positive and finite, got {mw} mW")
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class NoisePower:
    linear_mw: float
    dbm: float

    def __post_init__(self):
        if not (self.linear_mw > 0 and math.isfinite(self.linear_mw)):
            raise InvalidParameterError(f"Noise power must be positive, got {self.linear_mw} mW")

    @classmethod
    def from_dbm(cls, dbm: float) -> 'NoisePower':
        return cls(linear_mw=dbm_to_linear(dbm), dbm=float(dbm))

    @classmethod
    def from_linear(cls, mw: float) -> 'NoisePower':
        return cls(linear_mw=float(mw), dbm=linear_to_dbm(mw))


@dataclass(frozen=True)
class SnrSpec:
    db: float
    linear: float

    def __post_init__(self):
        if not (self.linear > 0 and math.isfinite(self.linear)):
            raise InvalidParameterError(f"SNR must be positive in linear units, got {self.linear}")

    @classmethod
    def from_db(cls, db: float) -> 'SnrSpec':
        return cls(db=float(db), linear=dbm_to_linear(db))

    @classmethod
    def from_linear(cls, linear: float) -> 'SnrSpec':
        return cls(db=linear_to_dbm(linear), linear=float(linear))


@dataclass(frozen=True, eq=False)
class SensingFrame:
    """N complex observations x(n) with the hypothesis and parameters that produced them."""
    samples: np.ndarray
    truth: Hypothesis
    noise: NoisePower
    snr: Optional[SnrSpec]
    seed: int
    _energies: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size < 1:
            raise InvalidParameterError("A frame needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise InvalidParameterError("Frame samples must be finite")
        samples = samples.copy()
        samples.setflags(write=False)
        energies = np.square(samples.real) + np.square(samples.imag)
        energies.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'truth', Hypothesis(self.truth))
        object.__setattr__(self, '_energies', energies)

    @property
    def n(self) -> int:
        return int(self.samples.size)

    def energies(self) -> np.ndarray:
        """Per-sample energies |x(n)|^2 in mW"""
        return self._energies

    def same_samples(self, other: 'SensingFrame') -> bool:
        return self.samples.tobytes() == other.samples.tobytes()


def _validate_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= UINT64_MAX:
        raise InvalidParameterError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


def splitmix_outputs(keys, counters) -> np.ndarray:
    """Counter-indexed SplitMix64 outputs; `keys` and `counters` broadcast together"""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over='ignore'):
        return _mix64(keys + (counters + np.uint64(1)) * _GOLDEN)


def derive_seed(seed: int, *labels: int) -> int:
    """Child seed reached from `seed` by following `labels` one level at a time"""
    key = np.uint64(_validate_seed(seed))
    for label in labels:
        key = splitmix_outputs(key, label)[()]
    return int(key)


def derive_seeds(seed: int, label: int, count: int) -> np.ndarray:
    """Seeds derive_seed(derive_seed(seed, label), i) for i in range(count)"""
    base = np.uint64(derive_seed(seed, label))
    return splitmix_outputs(base, np.arange(count, dtype=np.uint64))


def _standard_complex_normals(keys: np.ndarray, n: int) -> np.ndarray:
    """Box-Muller over each key's stream: complex normals with unit variance per component"""
    raw = splitmix_outputs(keys[:, None], np.arange(2 * n, dtype=np.uint64)[None, :])
    uniforms = (raw >> np.uint64(11)).astype(np.float64) / _TWO_POW_53
    u1 = 1.0 - uniforms[:, 0::2]  # in (0, 1]
    u2 = uniforms[:, 1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return radius * np.cos(angle) + 1j * (radius * np.sin(angle))


def generate_samples(truth: Hypothesis, noise: NoisePower, snr: Optional[SnrSpec], n: int,
                     seeds: Sequence[int]) -> np.ndarray:
    """One row of n samples per seed; row i equals generate_frame(..., seeds[i]).samples"""
    truth = Hypothesis(truth)
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"Frame length must be at least 1, got {n}")
    if truth is Hypothesis.H1 and snr is None:
        raise InvalidParameterError("An SNR is required under H1")
    keys = np.asarray(seeds, dtype=np.uint64).reshape(-1)

    noise_keys = splitmix_outputs(keys, NOISE_STREAM)
    samples = math.sqrt(noise.linear_mw / 2.0) * _standard_complex_normals(noise_keys, n)
    if truth is Hypothesis.H1:
        signal_power = snr.linear * noise.linear_mw
        signal_keys = splitmix_outputs(keys, SIGNAL_STREAM)
        samples = samples + math.sqrt(signal_power / 2.0) * _standard_complex_normals(signal_keys, n)
    return samples


def generate_frame(truth: Hypothesis, noise: NoisePower, snr: Optional[SnrSpec], n: int,
                   seed: int) -> SensingFrame:
    """Draw one frame under `truth`: circular Gaussian noise of variance sigma_n^2, plus an
    independent circular Gaussian signal of variance gamma * sigma_n^2 under H1."""
    truth = Hypothesis(truth)
    seed = _validate_seed(seed)
    samples = generate_samples(truth, noise, snr, n, [seed])[0]
    return SensingFrame(
        samples=samples,
        truth=truth,
        noise=noise,
        snr=snr if truth is Hypothesis.H1 else None,
        seed=seed,
    )


def mean_energy(values) -> float:
    """Arithmetic mean of nonnegative energy values, the energy detector's test statistic"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidParameterError("Cannot average an empty observation")
    return float(np.mean(values))


def empirical_energy(frame: SensingFrame) -> float:
    """(1/N) * sum |x(n)|^2"""
    return mean_energy(frame.energies())


def frame_statistics(samples: np.ndarray) -> np.ndarray:
    """Row-wise energy statistic for a (frames, N) sample matrix"""
    return np.mean(np.square(samples.real) + np.square(samples.imag), axis=1)
