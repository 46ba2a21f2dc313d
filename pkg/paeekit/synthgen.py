"""Seeded synthetic protocol generator.

Each subject gets a supine rest session (gas exchange only) and an ADL session
with the activities in a shuffled order. The ADL session carries five 30 Hz
accelerometers and breath-by-breath gas exchange on one clock starting at 0.

Modeling assumption: pelvis and thigh oscillation amplitude follows the
subject's PAEE while wrist amplitude follows a per-activity gain that is
nearly unrelated to PAEE.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from rich.progress import Progress
from scipy import signal

from . import __version__
from .config import GeneratorConfig, format_flat_config
from .data import (
    BreathSeries,
    RawTriaxialSeries,
    SensorLocation,
    Sex,
    SubjectMeta,
    SubjectRecord,
    UniformSeries,
    write_subject,
)
from .dsp import GRAVITY_CUTOFF_HZ, GRAVITY_ORDER, LOWPASS_CUTOFF_HZ, LOWPASS_ORDER, design_butterworth_lowpass
from .energetics import gas_for_power, weir_power
from .errors import ConfigInvalid
from .logging import get_logger
from .parallel import ParallelProcessor

logger = get_logger(__name__)

GENERATOR_VERSION = f"paeekit-synthgen/{__version__}"
GRAVITY = 9.81
STAIR_BOUTS = 5
STAIR_PAUSE_S = 10.0
STANDING_LEVEL = 0.5
REST_TRANSIENT = 0.25
REST_TRANSIENT_S = 300.0
WRIST_CADENCE_HZ = (0.3, 0.8)
TALK_BURST_S = (5.0, 15.0)

MODELING_NOTE = (
    "Wrist acceleration is decoupled from PAEE by construction (modeling assumption, "
    "not a measured fact); pelvis and thigh oscillation amplitude scales with PAEE."
)

# gravity direction per sensor (device frame, m/s^2)
_GRAVITY_VECTORS = {
    SensorLocation.PELVIS: (0.0, 0.0, GRAVITY),
    SensorLocation.LEFT_THIGH: (0.0, GRAVITY, 0.0),
    SensorLocation.RIGHT_THIGH: (0.0, -GRAVITY, 0.0),
    SensorLocation.LEFT_WRIST: (0.6 * GRAVITY, 0.0, 0.8 * GRAVITY),
    SensorLocation.RIGHT_WRIST: (-0.6 * GRAVITY, 0.0, 0.8 * GRAVITY),
}

# share of the oscillation seen on each axis
_AXIS_WEIGHTS = {
    SensorLocation.PELVIS: (0.3, 0.4, 1.0),
    SensorLocation.LEFT_THIGH: (1.0, 0.5, 0.3),
    SensorLocation.RIGHT_THIGH: (1.0, 0.5, 0.3),
    SensorLocation.LEFT_WRIST: (0.6, 0.8, 0.5),
    SensorLocation.RIGHT_WRIST: (0.6, 0.8, 0.5),
}

COM_LOCATIONS = (SensorLocation.PELVIS, SensorLocation.LEFT_THIGH, SensorLocation.RIGHT_THIGH)
WRIST_LOCATIONS = (SensorLocation.LEFT_WRIST, SensorLocation.RIGHT_WRIST)


@dataclass(frozen=True)
class ActivityProfile:
    name: str
    paee_level: float
    wrist_gain: float
    cadence_hz: float
    duration_s: Optional[float] = None
    duration_range_s: Optional[Tuple[float, float]] = None
    com_gain: float = 0.5
    bouts: int = 1

    def __post_init__(self):
        if (self.duration_s is None) == (self.duration_range_s is None):
            raise ValueError(f"{self.name}: give exactly one of duration_s and duration_range_s")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ValueError(f"{self.name}: duration must be positive")
        if self.duration_range_s is not None and not 0 < self.duration_range_s[0] <= self.duration_range_s[1]:
            raise ValueError(f"{self.name}: duration range must satisfy 0 < min <= max")
        if self.paee_level < 0 or self.wrist_gain < 0 or self.com_gain < 0:
            raise ValueError(f"{self.name}: levels and gains must be non-negative")

    @property
    def variable(self) -> bool:
        return self.duration_range_s is not None


def default_protocol(
    x_range_s: Tuple[float, float] = (120.0, 300.0),
    com_gain: float = 0.5,
) -> List[ActivityProfile]:
    """The eleven ADL activities with their durations, PAEE plateaus and sensor gains."""
    x = tuple(x_range_s)
    rows = [
        # name, duration, PAEE W/kg, wrist gain m/s^2, cadence Hz
        ("Sitting resting", 300.0, 0.1, 0.2, 0.37),
        ("Sitting reading", 300.0, 0.3, 0.6, 0.37),
        ("Standing still", 180.0, STANDING_LEVEL, 0.2, 0.37),
        ("Working on a laptop", x, 0.7, 1.4, 0.41),
        ("Emptying dishwasher", x, 1.6, 0.9, 0.43),
        ("Mopping", x, 2.5, 1.4, 0.53),
        ("Stacking shelves with books", x, 1.8, 0.9, 0.47),
        ("Climbing stairs (5 times)", x, 4.6, 0.6, 0.67),
        ("Treadmill (3 km/h)", 300.0, 3.0, 0.9, 0.71),
        ("Treadmill (5 km/h)", 300.0, 4.2, 1.4, 0.79),
        ("Cycle at 125 Watt", 300.0, 5.0, 0.2, 0.61),
    ]
    protocol = []
    for name, duration, level, wrist, cadence in rows:
        fixed = isinstance(duration, float)
        protocol.append(ActivityProfile(
            name=name,
            paee_level=level,
            wrist_gain=wrist,
            cadence_hz=cadence,
            duration_s=duration if fixed else None,
            duration_range_s=None if fixed else duration,
            com_gain=com_gain,
            bouts=STAIR_BOUTS if name.startswith("Climbing stairs") else 1,
        ))
    return protocol


@dataclass(frozen=True)
class Segment:
    activity: int
    name: str
    start: float
    end: float


@dataclass(eq=False)
class GeneratedSubject:
    record: SubjectRecord
    truth: UniformSeries
    schedule: List[Segment]
    clamped: int = 0


@dataclass
class GenerationSummary:
    out_dir: Path
    subjects: List[str] = field(default_factory=list)
    clamped: Dict[str, int] = field(default_factory=dict)


def _subject_rng(seed: int, subject_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(subject_index,)))


def _draw_meta(rng: np.random.Generator, subject_index: int) -> SubjectMeta:
    sex = Sex.F if rng.random() < 0.5 else Sex.M
    age = int(rng.integers(18, 61))
    height = float(np.clip(rng.normal(172.0, 9.0), 150.0, 200.0))
    bmi_cap = 39.0 * (height / 100.0) ** 2
    mass = float(np.clip(rng.normal(70.0, 11.0), 45.5, bmi_cap))
    return SubjectMeta(
        id=f"S{subject_index + 1:02d}",
        sex=sex,
        age=age,
        height_cm=round(height, 1),
        mass_kg=round(mass, 1),
    )


def _breath_times(rng: np.random.Generator, cfg: GeneratorConfig, span_s: float) -> np.ndarray:
    shortest = cfg.breath_interval_s * (1.0 - cfg.breath_jitter)
    count = int(span_s / shortest) + 2
    intervals = cfg.breath_interval_s * (1.0 + cfg.breath_jitter * rng.uniform(-1.0, 1.0, size=count))
    first = rng.uniform(0.0, 0.5)
    times = np.round(first + np.concatenate([[0.0], np.cumsum(intervals)]), 3)
    return times[times <= span_s]


def _breaths(
    rng: np.random.Generator,
    cfg: GeneratorConfig,
    times: np.ndarray,
    watts: np.ndarray,
    labels: List[str],
) -> Tuple[BreathSeries, int]:
    """Gas flows producing ``watts`` through the Weir relation, plus noise; returns clamp count."""
    rer = np.clip(cfg.rer + cfg.rer_sd * rng.standard_normal(len(times)), 0.7, 1.0)
    vo2, vco2 = gas_for_power(watts, rer)
    vo2 = vo2 + cfg.gas_noise_sd * rng.standard_normal(len(times))
    vco2 = vco2 + cfg.gas_noise_sd * rer * rng.standard_normal(len(times))
    clamped = int(np.count_nonzero((vo2 < 0) | (vco2 < 0)))
    vo2 = np.round(np.maximum(vo2, 0.0), 2)
    vco2 = np.round(np.maximum(vco2, 0.0), 2)
    return BreathSeries(times, vo2, vco2, labels), clamped


def _schedule(
    rng: np.random.Generator,
    protocol: Sequence[ActivityProfile],
    scale: float,
) -> List[Segment]:
    durations = []
    for profile in protocol:
        if profile.variable:
            lo, hi = profile.duration_range_s
            durations.append(float(round(rng.uniform(lo, hi))))
        else:
            durations.append(float(profile.duration_s))
    order = rng.permutation(len(protocol))
    segments, clock = [], 0.0
    for index in order:
        length = float(max(round(durations[index] * scale), 10))
        segments.append(Segment(int(index), protocol[index].name, clock, clock + length))
        clock += length
    return segments


def _plateaus(protocol: Sequence[ActivityProfile], schedule: Sequence[Segment], t: np.ndarray, scale: float):
    """Step PAEE level and activity index for every sample time."""
    level = np.zeros_like(t)
    activity = np.zeros(len(t), dtype=np.int64)
    for seg in schedule:
        profile = protocol[seg.activity]
        inside = (t >= seg.start) & (t < seg.end)
        activity[inside] = seg.activity
        level[inside] = profile.paee_level
        if profile.bouts > 1:
            pause = STAIR_PAUSE_S * scale
            bout = (seg.end - seg.start - pause * (profile.bouts - 1)) / profile.bouts
            offset = t[inside] - seg.start
            resting = (offset % (bout + pause)) >= bout
            level[np.flatnonzero(inside)[resting]] = STANDING_LEVEL
    return level, activity


def _com_compensation(freqs: np.ndarray, fs: float) -> np.ndarray:
    """Amplitude factor that undoes gravity removal, the 6 Hz low-pass and 1 s averaging."""
    gravity = design_butterworth_lowpass(GRAVITY_ORDER, GRAVITY_CUTOFF_HZ, fs)
    lowpass = design_butterworth_lowpass(LOWPASS_ORDER, LOWPASS_CUTOFF_HZ, fs)
    h_gravity = np.abs(gravity.frequency_response(freqs, fs)) ** 2
    h_lowpass = np.abs(lowpass.frequency_response(freqs, fs)) ** 2
    return 1.0 / (np.abs(np.sinc(freqs)) * (1.0 - h_gravity) * h_lowpass)


def generate_subject(
    cfg: GeneratorConfig,
    subject_index: int,
    protocol: Optional[Sequence[ActivityProfile]] = None,
) -> GeneratedSubject:
    """Generate one subject; identical (cfg, subject_index) always gives identical data."""
    fs = cfg.acc_rate_hz
    if cfg.rest_duration_s < 1800.0 + 2.0 * cfg.breath_interval_s * (1.0 + cfg.breath_jitter):
        raise ConfigInvalid("generator.rest_duration_s leaves no margin above the 1800 s rest minimum")
    protocol = list(protocol) if protocol is not None else default_protocol(cfg.x_duration_range_s, cfg.com_gain)
    rng = _subject_rng(cfg.seed, subject_index)

    meta = _draw_meta(rng, subject_index)
    rmr_vo2 = cfg.rmr_vo2_ml_kg_min * meta.mass_kg * (1.0 + cfg.rmr_sd_fraction * rng.standard_normal())
    rmr_watts = weir_power(rmr_vo2, rmr_vo2 * cfg.rer)
    fitness = math.exp(cfg.fitness_sd * rng.standard_normal())
    subject_gain = math.exp(cfg.subject_gain_sd * rng.standard_normal())

    # rest session: resting power with an early transient
    rest_t = _breath_times(rng, cfg, cfg.rest_duration_s)
    rest_watts = rmr_watts * (1.0 + REST_TRANSIENT * np.clip(1.0 - rest_t / REST_TRANSIENT_S, 0.0, None))
    rest, rest_clamped = _breaths(rng, cfg, rest_t, rest_watts, ["Supine rest"] * len(rest_t))

    # ADL schedule and true PAEE on the accelerometer clock
    schedule = _schedule(rng, protocol, cfg.duration_scale)
    total_s = schedule[-1].end
    n = int(round(total_s * fs))
    t = np.arange(n) / fs
    level, activity = _plateaus(protocol, schedule, t, cfg.duration_scale)
    decay = math.exp(-1.0 / (cfg.transition_tau_s * fs))
    paee, _ = signal.lfilter([1.0 - decay], [1.0, -decay], level, zi=[decay * level[0]])
    paee = fitness * paee

    n_activities = len(protocol)
    cadences = np.array([p.cadence_hz for p in protocol])
    compensation = _com_compensation(cadences, fs)
    wrist_gains = np.array([p.wrist_gain for p in protocol]) * cfg.wrist_scale
    wrist_cadence = rng.uniform(*WRIST_CADENCE_HZ, size=n_activities)

    acc: Dict[SensorLocation, RawTriaxialSeries] = {}
    timestamps = np.round(t, 4)
    for location in SensorLocation:
        jitter = np.exp(rng.normal(0.0, cfg.activity_gain_sd, size=n_activities))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(3, n_activities))
        if location in COM_LOCATIONS:
            gains = np.array([p.com_gain for p in protocol])
            envelope = gains[activity] * paee * subject_gain * jitter[activity] * compensation[activity]
            freq = cadences[activity]
        else:
            wrist_jitter = np.exp(rng.normal(0.0, cfg.wrist_jitter_sd, size=n_activities))
            envelope = wrist_gains[activity] * wrist_jitter[activity]
            freq = wrist_cadence[activity]
        axes = []
        for axis in range(3):
            motion = _AXIS_WEIGHTS[location][axis] * envelope * np.sin(2.0 * np.pi * freq * t + phases[axis, activity])
            noise = cfg.acc_noise_sd * rng.standard_normal(n)
            axes.append(np.round(_GRAVITY_VECTORS[location][axis] + motion + noise, 4))
        acc[location] = RawTriaxialSeries(timestamps, *axes)

    # ADL gas exchange with talking bursts
    adl_t = _breath_times(rng, cfg, total_s)
    breath_paee = np.interp(adl_t, t, paee)
    adl_watts = rmr_watts + breath_paee * meta.mass_kg
    n_bursts = int(rng.poisson(cfg.talking_artifact_rate * total_s / 60.0))
    starts = rng.uniform(0.0, total_s, size=n_bursts)
    lengths = rng.uniform(*TALK_BURST_S, size=n_bursts)
    talking = np.zeros(len(adl_t), dtype=bool)
    for start, length in zip(starts, lengths):
        talking |= (adl_t >= start) & (adl_t < start + length)
    extra_vo2 = np.where(talking, cfg.talking_artifact_ml_min, 0.0)
    adl_watts = adl_watts + weir_power(extra_vo2, extra_vo2 * cfg.rer)
    labels = [protocol[activity[min(int(bt * fs), n - 1)]].name for bt in adl_t]
    adl, adl_clamped = _breaths(rng, cfg, adl_t, adl_watts, labels)

    seconds = np.arange(int(math.floor(total_s)))
    truth = UniformSeries(0.0, 1.0, paee[np.minimum(np.round(seconds * fs).astype(np.int64), n - 1)])

    record = SubjectRecord(meta=meta, acc=acc, rest=rest, adl=adl)
    return GeneratedSubject(record=record, truth=truth, schedule=schedule, clamped=rest_clamped + adl_clamped)


def write_truth(truth: UniformSeries, subject_dir: Path) -> Path:
    path = Path(subject_dir) / "truth_paee.csv"
    frame = pd.DataFrame({"t_s": truth.times, "paee_wkg": truth.values})
    path.write_text(frame.to_csv(index=False, lineterminator="\n"))
    return path


def write_manifest(cfg: GeneratorConfig, summary: GenerationSummary) -> Path:
    lines = [f"# {MODELING_NOTE}", f"generator_version = {GENERATOR_VERSION}", f"seed = {cfg.seed}"]
    lines += format_flat_config(cfg.model_dump(mode="json"), prefix="generator.")
    lines += [f"clamped.{sid} = {summary.clamped[sid]}" for sid in summary.subjects]
    path = summary.out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def generate_dataset(
    cfg: GeneratorConfig,
    out_dir: Union[str, Path],
    max_workers: int = 1,
    progress: Optional[Progress] = None,
) -> GenerationSummary:
    """Write ``cfg.n_subjects`` subject directories plus ``manifest.txt`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def build(index: int) -> Tuple[str, int]:
        subject = generate_subject(cfg, index)
        subject_dir = write_subject(subject.record, out_dir)
        write_truth(subject.truth, subject_dir)
        return subject.record.meta.id, subject.clamped

    processor = ParallelProcessor(max_workers=max_workers)
    work_items = processor.process_batch(
        list(range(cfg.n_subjects)),
        build,
        progress=progress,
        description="[cyan]Generating subjects...",
    )
    summary = GenerationSummary(out_dir=out_dir)
    for item in work_items:
        if item.error is not None:
            raise item.error
        subject_id, clamped = item.result
        summary.subjects.append(subject_id)
        summary.clamped[subject_id] = clamped
    write_manifest(cfg, summary)
    logger.info(f"Generated {len(summary.subjects)} subjects in {out_dir}")
    return summary
