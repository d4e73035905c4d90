"""Neyman-Pearson energy detector, Q-function machinery and performance evaluation."""
import csv
import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np
from django.conf import settings
from scipy import special

from apps.common.exceptions import DomainError, InvalidParameterError
from apps.signal.services import (
    Hypothesis, NoisePower, SnrSpec, derive_seed, generate_samples, frame_statistics,
    splitmix_outputs,
)

logger = logging.getLogger(__name__)

RATE_CSV_HEADER = ['snr_db', 'n', 'pf_target', 'method', 'pd', 'pf', 'trials', 'half_width']

# Child-stream labels of a Monte Carlo seed
H0_TRIALS = 0
H1_TRIALS = 1

_Z95 = 1.96
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class TargetFalseAlarm:
    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise InvalidParameterError(f"Target false alarm must lie in (0, 1), got {self.value}")


@dataclass(frozen=True)
class EnergyThreshold:
    eta_mw: float
    n: int
    pf_target: TargetFalseAlarm
    noise: NoisePower

    @property
    def always_present(self) -> bool:
        """A nonpositive threshold declares every frame Present"""
        return self.eta_mw <= 0.0

    def as_dict(self) -> dict:
        return {
            'eta_mw': self.eta_mw,
            'n': self.n,
            'pf_target': self.pf_target.value,
            'noise_dbm': self.noise.dbm,
            'always_present': self.always_present,
        }


class Decision(str, enum.Enum):
    PRESENT = 'present'  # declare H1
    ABSENT = 'absent'    # declare H0

    @property
    def hypothesis(self) -> Hypothesis:
        return Hypothesis.H1 if self is Decision.PRESENT else Hypothesis.H0


@dataclass(frozen=True)
class RatePair:
    pd: float
    pf: float
    trials: int
    half_width: float


@dataclass(frozen=True)
class RateRow:
    """One line of the rate CSV"""
    snr_db: float
    n: int
    pf_target: float
    method: str
    pd: float
    pf: float
    trials: int
    half_width: float

    @classmethod
    def from_rates(cls, snr: SnrSpec, n: int, pf_target: TargetFalseAlarm, method: str,
                   rates: RatePair) -> 'RateRow':
        return cls(snr.db, n, pf_target.value, method, rates.pd, rates.pf, rates.trials, rates.half_width)


def q_function(x):
    """Standard Gaussian upper-tail probability Q(x) = erfc(x / sqrt 2) / 2"""
    result = 0.5 * special.erfc(np.asarray(x, dtype=np.float64) / _SQRT2)
    return float(result) if np.ndim(result) == 0 else result


def _tail_rational_approximation(p: float) -> float:
    # Abramowitz and Stegun 26.2.23, |error| < 4.5e-4, valid for 0 < p <= 0.5
    t = math.sqrt(-2.0 * math.log(p))
    c0, c1, c2 = 2.515517, 0.802853, 0.010328
    d1, d2, d3 = 1.432788, 0.189269, 0.001308
    return t - ((c2 * t + c1) * t + c0) / (((d3 * t + d2) * t + d1) * t + 1.0)


def q_inverse(p: float) -> float:
    """x with Q(x) = p: a rational tail approximation polished by two Newton steps on Q"""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"Q-inverse is defined on (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        # 1 - p is exact here, and the small tail keeps its relative precision
        return -q_inverse(1.0 - p)
    x = _tail_rational_approximation(p)
    for _ in range(2):
        density = _INV_SQRT_2PI * math.exp(-0.5 * x * x)
        if density == 0.0:
            break
        x += (q_function(x) - p) / density
    return x


def np_threshold(pf_target: TargetFalseAlarm, n: int, noise: NoisePower) -> EnergyThreshold:
    """eta = (1 + Q^-1(Pf*) / sqrt(N)) * sigma_n^2"""
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"Sample count must be at least 1, got {n}")
    eta = (1.0 + math.sqrt(1.0 / n) * q_inverse(pf_target.value)) * noise.linear_mw
    threshold = EnergyThreshold(eta_mw=eta, n=n, pf_target=pf_target, noise=noise)
    if threshold.always_present:
        logger.info("Threshold %.6g mW is nonpositive (Pf*=%s, N=%d); every frame is Present",
                    eta, pf_target.value, n)
    return threshold


def detect(statistic: float, threshold: EnergyThreshold) -> Decision:
    """Present iff statistic >= eta"""
    statistic = float(statistic)
    if statistic < 0.0 or math.isnan(statistic):
        raise InvalidParameterError(f"Energy statistic must be nonnegative, got {statistic}")
    return Decision.PRESENT if statistic >= threshold.eta_mw else Decision.ABSENT


def binomial_half_width(trials: int) -> float:
    """Conservative 95% half-width 1.96 * sqrt(1/4 / trials)"""
    return _Z95 * math.sqrt(0.25 / trials)


def theoretical_pd(snr: SnrSpec, n: int, pf_target: TargetFalseAlarm) -> float:
    """Gaussian (CLT) detection probability for the Neyman-Pearson threshold"""
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"Sample count must be at least 1, got {n}")
    gamma = snr.linear
    return q_function((q_inverse(pf_target.value) - gamma * math.sqrt(n)) / (1.0 + gamma))


def _batch_bounds(trials: int, batch_size: int):
    for start in range(0, trials, batch_size):
        yield start, min(trials, start + batch_size)


def simulate_statistics(truth: Hypothesis, noise: NoisePower, snr: Optional[SnrSpec], n: int,
                        trials: int, seed: int, workers: Optional[int] = None,
                        batch_size: Optional[int] = None) -> np.ndarray:
    """Energy statistics of `trials` independent frames under `truth`.

    Trial t uses the frame seed derive_seed(seed, label(truth), t), so any partition of
    the trials across workers gives the sequential result.
    """
    trials = int(trials)
    if trials < 1:
        raise InvalidParameterError(f"Trial count must be at least 1, got {trials}")
    sensing = settings.RADIOBENCH_SENSING
    batch_size = batch_size or sensing['MC_BATCH_SIZE']
    workers = workers or sensing['MC_WORKERS']
    label = H1_TRIALS if Hypothesis(truth) is Hypothesis.H1 else H0_TRIALS
    base = np.uint64(derive_seed(seed, label))
    statistics = np.empty(trials, dtype=np.float64)

    def run_batch(bounds):
        start, stop = bounds
        seeds = splitmix_outputs(base, np.arange(start, stop, dtype=np.uint64))
        statistics[start:stop] = frame_statistics(generate_samples(truth, noise, snr, n, seeds))
        logger.debug("Simulated %s trials %d-%d", truth, start, stop)

    batches = list(_batch_bounds(trials, batch_size))
    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_batch, batches))
    else:
        for bounds in batches:
            run_batch(bounds)
    return statistics


def rates_from_statistics(h0_statistics: np.ndarray, h1_statistics: np.ndarray,
                          threshold: EnergyThreshold) -> RatePair:
    trials = int(len(h1_statistics))
    pd = float(np.count_nonzero(h1_statistics >= threshold.eta_mw)) / trials
    pf = float(np.count_nonzero(h0_statistics >= threshold.eta_mw)) / len(h0_statistics)
    return RatePair(pd=pd, pf=pf, trials=trials, half_width=binomial_half_width(trials))


def monte_carlo_rates(noise: NoisePower, snr: SnrSpec, n: int, pf_target: TargetFalseAlarm,
                      trials: int, seed: int, workers: Optional[int] = None) -> RatePair:
    """Empirical Pd and Pf of the energy detector over paired H0/H1 trials"""
    threshold = np_threshold(pf_target, n, noise)
    h0 = simulate_statistics(Hypothesis.H0, noise, None, n, trials, seed, workers)
    h1 = simulate_statistics(Hypothesis.H1, noise, snr, n, trials, seed, workers)
    rates = rates_from_statistics(h0, h1, threshold)
    logger.info("Energy detector at SNR %.2f dB, N=%d, Pf*=%s: Pd=%.4f Pf=%.4f (%d trials)",
                snr.db, n, pf_target.value, rates.pd, rates.pf, trials)
    return rates


def trial_seed(seed: int, truth: Hypothesis, index: int) -> int:
    """Frame seed of Monte Carlo trial `index` under `truth`"""
    label = H1_TRIALS if Hypothesis(truth) is Hypothesis.H1 else H0_TRIALS
    return derive_seed(seed, label, index)


def _format_number(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def rate_csv(rows: Iterable[RateRow]) -> str:
    """CSV text for rate rows, sorted by (snr_db, method); input order breaks ties"""
    ordered = sorted(rows, key=lambda row: (row.snr_db, row.method))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(RATE_CSV_HEADER)
    for row in ordered:
        writer.writerow([_format_number(getattr(row, column)) for column in RATE_CSV_HEADER])
    return buffer.getvalue()


def parse_rate_csv(text: str) -> List[RateRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != RATE_CSV_HEADER:
        raise InvalidParameterError(f"Unexpected rate CSV header {reader.fieldnames}")
    return [
        RateRow(
            snr_db=float(record['snr_db']), n=int(record['n']), pf_target=float(record['pf_target']),
            method=record['method'], pd=float(record['pd']), pf=float(record['pf']),
            trials=int(record['trials']), half_width=float(record['half_width']),
        )
        for record in reader
    ]
