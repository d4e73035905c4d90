"""Water-filling power allocation over OFDM subcarriers and a validator for proposed allocations."""
import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from apps.common.exceptions import InvalidParameterError, LengthMismatchError

logger = logging.getLogger(__name__)

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class SubcarrierCnrs:
    """Carrier-to-noise ratio per unit power (1/mW) of each subcarrier"""
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(c) for c in self.values)
        if not values:
            raise InvalidParameterError("At least one subcarrier is required")
        for index, c in enumerate(values):
            if not math.isfinite(c) or c <= 0.0:
                raise InvalidParameterError(f"CNR {index} must be positive and finite, got {c}",
                                            {'index': index})
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def inverse(self) -> np.ndarray:
        return 1.0 / self.as_array()


@dataclass(frozen=True)
class PowerBudget:
    total_mw: float

    def __post_init__(self):
        total = float(self.total_mw)
        if not math.isfinite(total) or total <= 0.0:
            raise InvalidParameterError(f"Power budget must be positive, got {total}")
        object.__setattr__(self, 'total_mw', total)


@dataclass(frozen=True)
class Allocation:
    powers_mw: Tuple[float, ...]
    water_level: float
    capacity_bits: float

    @classmethod
    def from_powers(cls, powers: Sequence[float], cnrs: SubcarrierCnrs) -> 'Allocation':
        """Wrap an arbitrary power vector, taking the water level implied by its active subcarriers"""
        powers = np.asarray(powers, dtype=np.float64)
        return cls(
            powers_mw=tuple(float(p) for p in powers),
            water_level=implied_water_level(powers, cnrs),
            capacity_bits=capacity(np.maximum(powers, 0.0), cnrs),
        )

    def as_dict(self) -> dict:
        return {
            'powers_mw': list(self.powers_mw),
            'water_level_mw': self.water_level,
            'capacity_bits': self.capacity_bits,
        }


class VerdictKind(str, enum.Enum):
    OPTIMAL = 'optimal'
    SUBOPTIMAL = 'suboptimal'
    INFEASIBLE = 'infeasible'


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    gap_bits: Optional[float] = None
    violation: Optional[str] = None  # 'nonnegativity' or 'budget'
    magnitude: Optional[float] = None

    @property
    def is_optimal(self) -> bool:
        return self.kind is VerdictKind.OPTIMAL

    def as_dict(self) -> dict:
        data = {'verdict': self.kind.value}
        if self.kind is VerdictKind.SUBOPTIMAL:
            data['gap_bits'] = self.gap_bits
        elif self.kind is VerdictKind.INFEASIBLE:
            data['violation'] = self.violation
            data['magnitude'] = self.magnitude
        return data


def _check_length(powers: np.ndarray, cnrs: SubcarrierCnrs):
    if powers.ndim != 1 or len(powers) != len(cnrs):
        raise LengthMismatchError(
            f"Expected {len(cnrs)} powers, got {powers.size}",
            {'expected': len(cnrs), 'actual': int(powers.size)},
        )


def capacity(powers: Sequence[float], cnrs: SubcarrierCnrs) -> float:
    """Sum capacity in bits: sum of log2(1 + p_k c_k)"""
    powers = np.asarray(powers, dtype=np.float64)
    _check_length(powers, cnrs)
    return float(np.sum(np.log1p(powers * cnrs.as_array())) / _LN2)


def waterfill(cnrs: SubcarrierCnrs, budget: PowerBudget) -> Allocation:
    """Capacity-maximizing allocation of the whole budget.

    Inverse CNRs are scanned in ascending order; the active set grows while the next
    inverse CNR lies strictly below the water level implied by the current set, so tied
    subcarriers are switched on together.
    """
    inverse = cnrs.inverse()
    order = np.argsort(inverse, kind='stable')
    floors = inverse[order]
    levels = (budget.total_mw + np.cumsum(floors)) / np.arange(1, len(floors) + 1)

    stops = np.flatnonzero(floors[1:] >= levels[:-1])
    active = int(stops[0]) + 1 if stops.size else len(floors)
    mu = float(levels[active - 1])

    powers = np.zeros_like(inverse)
    powers[order[:active]] = np.maximum(mu - floors[:active], 0.0)
    allocation = Allocation(
        powers_mw=tuple(float(p) for p in powers),
        water_level=mu,
        capacity_bits=capacity(powers, cnrs),
    )
    logger.debug("Water-filled %d subcarriers (%d active), mu=%.6g mW", len(cnrs), active, mu)
    return allocation


def implied_water_level(powers, cnrs: SubcarrierCnrs, tol: float = 0.0) -> float:
    """Mean of p_k + 1/c_k over subcarriers with p_k > tol; 0 when none is active"""
    powers = np.asarray(powers, dtype=np.float64)
    _check_length(powers, cnrs)
    active = powers > tol
    if not active.any():
        return 0.0
    return float(np.mean(powers[active] + cnrs.inverse()[active]))


def kkt_check(alloc: Allocation, cnrs: SubcarrierCnrs, budget: PowerBudget, tol: float) -> bool:
    """True iff the allocation spends the budget, is nonnegative and has a common water level.

    Every condition is checked against the absolute `tol`, whatever the budget scale.
    """
    powers = np.asarray(alloc.powers_mw, dtype=np.float64)
    _check_length(powers, cnrs)
    if abs(float(np.sum(powers)) - budget.total_mw) > tol:
        return False
    if np.any(powers < -tol):
        return False

    active = powers > tol
    if not active.any():
        return False
    inverse = cnrs.inverse()
    mu = implied_water_level(powers, cnrs, tol)
    if np.any(np.abs(powers[active] + inverse[active] - mu) > tol):
        return False
    return bool(np.all(inverse[~active] >= mu - tol))


def validate_external_solution(proposed: Sequence[float], cnrs: SubcarrierCnrs, budget: PowerBudget,
                               tol: float) -> Verdict:
    """Grade a proposed allocation against the water-filling optimum by capacity gap"""
    powers = np.asarray(proposed, dtype=np.float64)
    _check_length(powers, cnrs)
    if not np.all(np.isfinite(powers)):
        raise InvalidParameterError("Proposed powers must be finite")

    lowest = float(np.min(powers))
    if lowest < -tol:
        return Verdict(VerdictKind.INFEASIBLE, violation='nonnegativity', magnitude=-lowest)
    excess = abs(float(np.sum(powers)) - budget.total_mw)
    if excess > tol * max(1.0, budget.total_mw):
        return Verdict(VerdictKind.INFEASIBLE, violation='budget', magnitude=excess)

    gap = waterfill(cnrs, budget).capacity_bits - capacity(np.maximum(powers, 0.0), cnrs)
    if gap <= tol:
        return Verdict(VerdictKind.OPTIMAL)
    return Verdict(VerdictKind.SUBOPTIMAL, gap_bits=gap)


def cnrs_from_gains(gains: Sequence[float], noise_mw: float) -> SubcarrierCnrs:
    """c_k = g_k / sigma^2"""
    noise_mw = float(noise_mw)
    if not noise_mw > 0.0:
        raise InvalidParameterError(f"Noise power must be positive, got {noise_mw}")
    return SubcarrierCnrs(tuple(float(g) / noise_mw for g in gains))


def uniform_allocation(cnrs: SubcarrierCnrs, budget: PowerBudget) -> Allocation:
    share = budget.total_mw / len(cnrs)
    return Allocation.from_powers([share] * len(cnrs), cnrs)


def random_instance(rng: np.random.Generator, k_max: int = 8,
                    decades: Tuple[float, float] = (-3.0, 3.0)) -> Tuple[SubcarrierCnrs, PowerBudget]:
    """K uniform in 1..k_max; CNRs and budget log-uniform over `decades`"""
    if k_max < 1:
        raise InvalidParameterError(f"k_max must be at least 1, got {k_max}")
    k = int(rng.integers(1, k_max + 1))
    low, high = decades
    cnrs = SubcarrierCnrs(tuple(10.0 ** rng.uniform(low, high, size=k)))
    return cnrs, PowerBudget(float(10.0 ** rng.uniform(low, high)))
