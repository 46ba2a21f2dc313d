"""Filter design, zero-phase filtering, gravity removal, resampling and smoothing."""
import math
from dataclasses import dataclass
from functools import singledispatch
from typing import Tuple

import numpy as np
from scipy import signal

from .data import (
    BreathSeries,
    IrregularSeries,
    LabelSeries,
    RawTriaxialSeries,
    UniformSeries,
    UniformTriaxial,
)
from .errors import BadWindow, CutoffOutOfRange, EmptyBin, SignalTooShort, TooFewBreaths

GRAVITY_ORDER = 2
GRAVITY_CUTOFF_HZ = 0.25
LOWPASS_ORDER = 4
LOWPASS_CUTOFF_HZ = 6.0


@dataclass(frozen=True, eq=False)
class IirCoefficients:
    b: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        if len(self.b) < 1 or len(self.a) < 1:
            raise ValueError("filter coefficient arrays must be non-empty")
        if self.a[0] != 1.0:
            raise ValueError("feedback coefficients must be normalized so that a[0] == 1")

    @property
    def padlen(self) -> int:
        return 3 * (max(len(self.a), len(self.b)) - 1)

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    @property
    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    @property
    def dc_gain(self) -> float:
        return float(np.sum(self.b) / np.sum(self.a))

    def frequency_response(self, freqs: np.ndarray, fs: float) -> np.ndarray:
        """Complex single-pass response at ``freqs`` (Hz)."""
        _, h = signal.freqz(self.b, self.a, worN=np.asarray(freqs, dtype=np.float64), fs=fs)
        return h


def design_butterworth_lowpass(order: int, fc: float, fs: float) -> IirCoefficients:
    """Digital Butterworth low-pass via the pre-warped bilinear transform.

    The feed-forward taps are rescaled so the DC gain is exactly 1.
    """
    if order < 1:
        raise ValueError("filter order must be at least 1")
    if not 0 < fc < fs / 2:
        raise CutoffOutOfRange(f"cutoff {fc} Hz must lie strictly between 0 and fs/2 = {fs / 2} Hz")
    b, a = signal.butter(order, fc, btype="low", fs=fs)
    b = np.asarray(b, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    a = a / a[0]
    b = b * (np.sum(a) / np.sum(b))
    coef = IirCoefficients(b=b, a=a)
    if not coef.is_stable:
        raise CutoffOutOfRange(f"design (order={order}, fc={fc}, fs={fs}) is numerically unstable")
    return coef


def filtfilt(coef: IirCoefficients, x: np.ndarray) -> np.ndarray:
    """Forward-backward filtering along the last axis with odd-reflection padding."""
    x = np.asarray(x, dtype=np.float64)
    padlen = coef.padlen
    if x.shape[-1] <= padlen:
        raise SignalTooShort(f"signal of {x.shape[-1]} samples needs more than {padlen} for filtering")
    return signal.filtfilt(coef.b, coef.a, x, axis=-1, padtype="odd", padlen=padlen)


def _sample_rate(raw: RawTriaxialSeries) -> float:
    rate = raw.rate
    if not math.isfinite(rate):
        raise SignalTooShort("at least two samples are needed to estimate the sampling rate")
    return rate


def remove_gravity(
    raw: RawTriaxialSeries,
    order: int = GRAVITY_ORDER,
    cutoff_hz: float = GRAVITY_CUTOFF_HZ,
) -> RawTriaxialSeries:
    """Subtract a zero-phase low-pass gravity estimate from each axis."""
    coef = design_butterworth_lowpass(order, cutoff_hz, _sample_rate(raw))
    axes = raw.axes
    return raw.with_axes(axes - filtfilt(coef, axes))


def lowpass_acceleration(
    raw: RawTriaxialSeries,
    order: int = LOWPASS_ORDER,
    cutoff_hz: float = LOWPASS_CUTOFF_HZ,
) -> RawTriaxialSeries:
    coef = design_butterworth_lowpass(order, cutoff_hz, _sample_rate(raw))
    return raw.with_axes(filtfilt(coef, raw.axes))


def _bin_mean(timestamps: np.ndarray, rows: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean of ``rows`` (k, n) over one-second bins ``[s, s + 1)``."""
    if len(timestamps) == 0:
        raise SignalTooShort("cannot resample an empty series")
    first = math.floor(timestamps[0])
    index = np.floor(timestamps).astype(np.int64) - first
    n_bins = int(index[-1]) + 1
    counts = np.bincount(index, minlength=n_bins)
    if np.any(counts == 0):
        gap = int(np.flatnonzero(counts == 0)[0])
        raise EmptyBin(f"no samples in [{first + gap}, {first + gap + 1}) s")
    sums = np.vstack([np.bincount(index, weights=row, minlength=n_bins) for row in rows])
    return float(first), sums / counts


@singledispatch
def resample_bin_mean(x, rate: float = 1.0):
    """Average samples into consecutive one-second bins."""
    raise TypeError(f"cannot resample {type(x).__name__}")


@resample_bin_mean.register
def _(x: RawTriaxialSeries, rate: float = 1.0) -> UniformTriaxial:
    if rate != 1.0:
        raise ValueError("only 1 Hz bin-mean resampling is supported")
    start, means = _bin_mean(x.timestamps, x.axes)
    return UniformTriaxial(start=start, rate=1.0, values=means)


@resample_bin_mean.register
def _(x: IrregularSeries, rate: float = 1.0) -> UniformSeries:
    if rate != 1.0:
        raise ValueError("only 1 Hz bin-mean resampling is supported")
    start, means = _bin_mean(x.timestamps, np.asarray(x.values, dtype=np.float64)[np.newaxis, :])
    return UniformSeries(start=start, rate=1.0, values=means[0])


def interp_to_1hz(breaths: BreathSeries) -> Tuple[UniformSeries, UniformSeries, LabelSeries]:
    """Linear interpolation of gas flows onto whole seconds inside the breath span.

    Each second takes the label of its nearest breath; ties go to the earlier breath.
    """
    if len(breaths) < 2:
        raise TooFewBreaths(f"need at least two breaths, got {len(breaths)}")
    t = breaths.timestamps
    first, last = math.ceil(t[0]), math.floor(t[-1])
    grid = np.arange(first, last + 1, dtype=np.float64)
    vo2 = np.interp(grid, t, breaths.vo2)
    vco2 = np.interp(grid, t, breaths.vco2)

    right = np.clip(np.searchsorted(t, grid, side="left"), 1, len(t) - 1)
    left = right - 1
    nearest = np.where(grid - t[left] <= t[right] - grid, left, right)
    labels = [breaths.labels[i] for i in nearest]

    start = float(first)
    return (
        UniformSeries(start, 1.0, vo2),
        UniformSeries(start, 1.0, vco2),
        LabelSeries(start, 1.0, labels),
    )


def savgol_smooth(x: UniformSeries, window: int = 21, polyorder: int = 1) -> UniformSeries:
    """Savitzky-Golay smoothing with mirror padding at the edges."""
    if window < 1 or window % 2 == 0:
        raise BadWindow(f"window must be a positive odd sample count, got {window}")
    if not 0 <= polyorder < window:
        raise BadWindow(f"polyorder must satisfy 0 <= polyorder < window, got {polyorder}")
    if len(x) < window:
        raise SignalTooShort(f"series of {len(x)} samples is shorter than the {window}-sample window")
    smoothed = signal.savgol_filter(np.asarray(x.values, dtype=np.float64), window, polyorder, mode="mirror")
    return UniformSeries(x.start, x.rate, smoothed)

