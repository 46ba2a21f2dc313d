"""Resting metabolic rate, gas-flow to power conversion and PAEE ground truth."""
from dataclasses import dataclass
from typing import Union

import numpy as np

from .data import BreathSeries, UniformSeries
from .errors import LengthMismatch, NonPositiveMass, RestTooShort

WEIR_VO2_KCAL_PER_L = 3.941
WEIR_VCO2_KCAL_PER_L = 1.106
WATTS_PER_KCAL_MIN = 4184.0 / 60.0

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class RmrEstimate:
    vo2: float
    vco2: float

    def __post_init__(self):
        if self.vo2 < 0 or self.vco2 < 0:
            raise ValueError("RMR gas flows must be non-negative")


def estimate_rmr(rest: BreathSeries, discard_s: float = 300.0) -> RmrEstimate:
    """Mean VO2 and VCO2 over rest breaths at or after ``discard_s``."""
    if len(rest) == 0 or rest.timestamps[-1] <= discard_s:
        raise RestTooShort(f"rest recording must extend past the {discard_s:.0f} s discard window")
    keep = rest.timestamps >= discard_s
    return RmrEstimate(vo2=float(np.mean(rest.vo2[keep])), vco2=float(np.mean(rest.vco2[keep])))


def weir_power(vo2: ArrayLike, vco2: ArrayLike) -> ArrayLike:
    """Power in watts from gas flows in mL/min (Weir, no protein term)."""
    kcal_min = WEIR_VO2_KCAL_PER_L * (np.asarray(vo2) / 1000.0) + WEIR_VCO2_KCAL_PER_L * (np.asarray(vco2) / 1000.0)
    watts = kcal_min * WATTS_PER_KCAL_MIN
    return float(watts) if np.ndim(watts) == 0 else watts


def derive_paee(
    adl_vo2: UniformSeries,
    adl_vco2: UniformSeries,
    rmr: RmrEstimate,
    mass_kg: float,
) -> UniformSeries:
    """PAEE in W/kg: subtract RMR gas flows, convert, normalize by mass.

    Negative values are kept.
    """
    if len(adl_vo2) != len(adl_vco2) or adl_vo2.start != adl_vco2.start or adl_vo2.rate != adl_vco2.rate:
        raise LengthMismatch(
            f"gas series are not aligned ({len(adl_vo2)} vs {len(adl_vco2)} samples, "
            f"starts {adl_vo2.start} vs {adl_vco2.start})"
        )
    if not mass_kg > 0:
        raise NonPositiveMass(f"mass must be positive, got {mass_kg}")
    watts = weir_power(adl_vo2.values - rmr.vo2, adl_vco2.values - rmr.vco2)
    return UniformSeries(adl_vo2.start, adl_vo2.rate, np.asarray(watts, dtype=np.float64) / mass_kg)


def gas_for_power(watts: ArrayLike, rer: ArrayLike):
    """Invert :func:`weir_power` at a respiratory exchange ratio: returns (vo2, vco2) in mL/min."""
    kcal_min = np.asarray(watts, dtype=np.float64) / WATTS_PER_KCAL_MIN
    rer = np.asarray(rer, dtype=np.float64)
    vo2 = 1000.0 * kcal_min / (WEIR_VO2_KCAL_PER_L + WEIR_VCO2_KCAL_PER_L * rer)
    return vo2, vo2 * rer
