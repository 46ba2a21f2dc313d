"""Domain types, CSV ingestion and emission, dataset loading and time-base alignment."""
import io
import math
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Sequence, TypeVar, Union

import numpy as np
import pandas as pd

from .errors import (
    DuplicateSubjectId,
    EmptyFile,
    InclusionCriteriaWarning,
    MalformedRow,
    MissingFile,
    NegativeGasFlow,
    NoOverlap,
    NonMonotoneTimestamps,
    ShortRest,
)
from .logging import get_logger

logger = get_logger(__name__)

ACC_HEADER = ["t_s", "ax", "ay", "az"]
BREATH_HEADER = ["t_s", "vo2_ml_min", "vco2_ml_min", "label"]
META_HEADER = ["id", "sex", "age", "height_cm", "mass_kg"]

NOMINAL_ACC_RATE_HZ = 30.0
ACC_RATE_TOLERANCE = 0.10
MIN_REST_S = 1800.0
BMI_LIMIT = 40.0
AGE_RANGE = (18, 60)


class Sex(str, Enum):
    F = "F"
    M = "M"


class SensorLocation(str, Enum):
    PELVIS = "pelvis"
    LEFT_THIGH = "left_thigh"
    RIGHT_THIGH = "right_thigh"
    LEFT_WRIST = "left_wrist"
    RIGHT_WRIST = "right_wrist"

    @property
    def filename(self) -> str:
        return f"acc_{self.value}.csv"


@dataclass(frozen=True)
class SubjectMeta:
    id: str
    sex: Sex
    age: int
    height_cm: float
    mass_kg: float

    def __post_init__(self):
        if not self.mass_kg > 0:
            raise ValueError(f"subject {self.id}: mass must be positive")
        if not self.height_cm > 0:
            raise ValueError(f"subject {self.id}: height must be positive")

    @property
    def bmi(self) -> float:
        return self.mass_kg / (self.height_cm / 100.0) ** 2


@dataclass(frozen=True, eq=False)
class RawTriaxialSeries:
    """Accelerometer samples at a nominal 30 Hz (m/s^2)."""
    timestamps: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray

    def __post_init__(self):
        n = len(self.timestamps)
        if not (len(self.ax) == len(self.ay) == len(self.az) == n):
            raise ValueError("timestamp and axis columns must have equal lengths")
        _check_increasing(self.timestamps)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def rate(self) -> float:
        """Mean sampling rate in Hz (nan for fewer than two samples)."""
        if len(self.timestamps) < 2:
            return float("nan")
        return (len(self.timestamps) - 1) / float(self.timestamps[-1] - self.timestamps[0])

    @property
    def axes(self) -> np.ndarray:
        return np.vstack([self.ax, self.ay, self.az])

    def with_axes(self, axes: np.ndarray) -> "RawTriaxialSeries":
        return RawTriaxialSeries(self.timestamps, axes[0], axes[1], axes[2])


@dataclass(frozen=True, eq=False)
class BreathSeries:
    """Breath-by-breath gas exchange with one activity label per breath."""
    timestamps: np.ndarray
    vo2: np.ndarray
    vco2: np.ndarray
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.timestamps)
        if not (len(self.vo2) == len(self.vco2) == len(self.labels) == n):
            raise ValueError("breath columns must have equal lengths")
        _check_increasing(self.timestamps)
        if n and (np.min(self.vo2) < 0 or np.min(self.vco2) < 0):
            raise NegativeGasFlow("gas flows must be non-negative")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def duration(self) -> float:
        if len(self.timestamps) < 2:
            return 0.0
        return float(self.timestamps[-1] - self.timestamps[0])


@dataclass(frozen=True, eq=False)
class IrregularSeries:
    """Scalar samples at arbitrary increasing timestamps."""
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values must have equal lengths")
        _check_increasing(self.timestamps)


@dataclass(frozen=True, eq=False)
class UniformSeries:
    """Fixed-rate scalar series; sample k sits at ``start + k / rate``."""
    start: float
    rate: float
    values: np.ndarray

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(len(self.values)) / self.rate

    def crop(self, offset: int, length: int) -> "UniformSeries":
        return type(self)(self.start + offset / self.rate, self.rate,
                          self.values[offset:offset + length])


@dataclass(frozen=True, eq=False)
class UniformTriaxial:
    """Fixed-rate three-channel series stored as a (3, n) array."""
    start: float
    rate: float
    values: np.ndarray

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.values.ndim != 2 or self.values.shape[0] != 3:
            raise ValueError("UniformTriaxial values must have shape (3, n)")

    def __len__(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(len(self)) / self.rate

    def crop(self, offset: int, length: int) -> "UniformTriaxial":
        return UniformTriaxial(self.start + offset / self.rate, self.rate,
                               self.values[:, offset:offset + length])


@dataclass(frozen=True, eq=False)
class LabelSeries:
    """Per-second activity labels on a uniform grid."""
    start: float
    rate: float
    values: List[str]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(len(self.values)) / self.rate

    def crop(self, offset: int, length: int) -> "LabelSeries":
        return LabelSeries(self.start + offset / self.rate, self.rate,
                           list(self.values[offset:offset + length]))


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    meta: SubjectMeta
    acc: Dict[SensorLocation, RawTriaxialSeries]
    rest: BreathSeries
    adl: BreathSeries

    def __post_init__(self):
        missing = [loc.value for loc in SensorLocation if loc not in self.acc]
        if missing:
            raise ValueError(f"subject {self.meta.id}: missing sensor locations {missing}")
        if self.rest.duration < MIN_REST_S:
            raise ShortRest(
                f"subject {self.meta.id}: rest lasts {self.rest.duration:.1f} s, "
                f"at least {MIN_REST_S:.0f} s required"
            )


@dataclass(frozen=True, eq=False)
class Dataset:
    subjects: List[SubjectRecord]

    def __post_init__(self):
        seen = set()
        for record in self.subjects:
            if record.meta.id in seen:
                raise DuplicateSubjectId(f"duplicate subject id: {record.meta.id}")
            seen.add(record.meta.id)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def ids(self) -> List[str]:
        return [s.meta.id for s in self.subjects]

    def without(self, subject_id: str) -> "Dataset":
        return Dataset([s for s in self.subjects if s.meta.id != subject_id])


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------


def _check_increasing(timestamps: np.ndarray) -> None:
    if len(timestamps) > 1:
        steps = np.diff(timestamps)
        if not np.all(steps > 0):
            first = int(np.argmax(~(steps > 0)))
            raise NonMonotoneTimestamps(
                f"timestamps must be strictly increasing (sample {first + 1}: "
                f"{timestamps[first]!r} -> {timestamps[first + 1]!r})"
            )


_FIELDS_RE = re.compile(r"line (\d+)")


def _read_frame(text: str, header: List[str]) -> pd.DataFrame:
    if not text.strip():
        raise EmptyFile("file is empty")
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise EmptyFile("file is empty") from exc
    except pd.errors.ParserError as exc:
        match = _FIELDS_RE.search(str(exc))
        raise MalformedRow(str(exc), int(match.group(1)) if match else None) from exc
    if list(frame.columns) != header:
        raise MalformedRow(f"expected header {','.join(header)}, got {','.join(map(str, frame.columns))}", 1)
    if frame.empty:
        raise EmptyFile("file has a header but no rows")
    return frame


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    coerced = pd.to_numeric(raw, errors="coerce")
    bad = coerced.isna() | raw.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: one for the header, one for 1-based numbering
        raise MalformedRow(f"{column}: not a number: {raw.iloc[row]!r}", row + 2)
    # astype(float) parses with correct rounding, so repr() output round-trips exactly
    values = raw.to_numpy().astype(np.float64)
    if not np.all(np.isfinite(values)):
        row = int(np.flatnonzero(~np.isfinite(values))[0])
        raise MalformedRow(f"{column}: non-finite value", row + 2)
    return values


def parse_acc_csv(text: str) -> RawTriaxialSeries:
    """Parse ``t_s,ax,ay,az`` accelerometer CSV text."""
    frame = _read_frame(text, ACC_HEADER)
    columns = [_numeric_column(frame, name) for name in ACC_HEADER]
    series = RawTriaxialSeries(*columns)
    rate = series.rate
    if len(series) > 1 and abs(rate - NOMINAL_ACC_RATE_HZ) > ACC_RATE_TOLERANCE * NOMINAL_ACC_RATE_HZ:
        raise MalformedRow(
            f"sampling rate {rate:.2f} Hz is outside {NOMINAL_ACC_RATE_HZ:.0f} Hz "
            f"± {ACC_RATE_TOLERANCE:.0%}"
        )
    return series


def parse_breath_csv(text: str) -> BreathSeries:
    """Parse ``t_s,vo2_ml_min,vco2_ml_min,label`` breath-by-breath CSV text."""
    frame = _read_frame(text, BREATH_HEADER)
    t, vo2, vco2 = (_numeric_column(frame, name) for name in BREATH_HEADER[:3])
    for name, values in (("vo2_ml_min", vo2), ("vco2_ml_min", vco2)):
        if np.any(values < 0):
            row = int(np.flatnonzero(values < 0)[0])
            raise NegativeGasFlow(f"line {row + 2}: {name} is negative ({values[row]!r})")
    return BreathSeries(t, vo2, vco2, frame["label"].tolist())


def parse_meta_csv(text: str) -> SubjectMeta:
    frame = _read_frame(text, META_HEADER)
    if len(frame) != 1:
        raise MalformedRow(f"meta.csv must hold exactly one data row, found {len(frame)}")
    row = frame.iloc[0]
    try:
        sex = Sex(row["sex"])
    except ValueError as exc:
        raise MalformedRow(f"sex must be F or M, got {row['sex']!r}", 2) from exc
    age, height, mass = (_numeric_column(frame, name)[0] for name in ("age", "height_cm", "mass_kg"))
    if age != int(age):
        raise MalformedRow(f"age must be an integer, got {row['age']!r}", 2)
    try:
        return SubjectMeta(str(row["id"]), sex, int(age), float(height), float(mass))
    except ValueError as exc:
        raise MalformedRow(str(exc), 2) from exc


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _to_csv(frame: pd.DataFrame) -> str:
    # pandas writes float64 with the shortest repr, which parses back bit-exactly
    return frame.to_csv(index=False, lineterminator="\n")


def format_acc_csv(series: RawTriaxialSeries) -> str:
    return _to_csv(pd.DataFrame({
        "t_s": series.timestamps, "ax": series.ax, "ay": series.ay, "az": series.az,
    }))


def format_breath_csv(series: BreathSeries) -> str:
    return _to_csv(pd.DataFrame({
        "t_s": series.timestamps,
        "vo2_ml_min": series.vo2,
        "vco2_ml_min": series.vco2,
        "label": series.labels,
    }))


def format_meta_csv(meta: SubjectMeta) -> str:
    return _to_csv(pd.DataFrame([{
        "id": meta.id, "sex": meta.sex.value, "age": meta.age,
        "height_cm": float(meta.height_cm), "mass_kg": float(meta.mass_kg),
    }]))


def write_subject(record: SubjectRecord, directory: Path) -> Path:
    """Write a subject in the dataset layout under ``directory/<id>/``."""
    subject_dir = Path(directory) / record.meta.id
    subject_dir.mkdir(parents=True, exist_ok=True)
    (subject_dir / "meta.csv").write_text(format_meta_csv(record.meta))
    for location in SensorLocation:
        (subject_dir / location.filename).write_text(format_acc_csv(record.acc[location]))
    (subject_dir / "rest.csv").write_text(format_breath_csv(record.rest))
    (subject_dir / "adl.csv").write_text(format_breath_csv(record.adl))
    return subject_dir


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------


def _read_required(path: Path) -> str:
    if not path.is_file():
        raise MissingFile(path)
    return path.read_text()


def load_subject(subject_dir: Path) -> SubjectRecord:
    subject_dir = Path(subject_dir)
    meta = parse_meta_csv(_read_required(subject_dir / "meta.csv"))
    acc = {
        location: parse_acc_csv(_read_required(subject_dir / location.filename))
        for location in SensorLocation
    }
    rest = parse_breath_csv(_read_required(subject_dir / "rest.csv"))
    adl = parse_breath_csv(_read_required(subject_dir / "adl.csv"))

    if meta.bmi >= BMI_LIMIT:
        warnings.warn(f"subject {meta.id}: BMI {meta.bmi:.1f} is not below {BMI_LIMIT:.0f}",
                      InclusionCriteriaWarning, stacklevel=2)
    if not AGE_RANGE[0] <= meta.age <= AGE_RANGE[1]:
        warnings.warn(f"subject {meta.id}: age {meta.age} outside {AGE_RANGE[0]}-{AGE_RANGE[1]}",
                      InclusionCriteriaWarning, stacklevel=2)

    return SubjectRecord(meta=meta, acc=acc, rest=rest, adl=adl)


def load_dataset(root: Union[str, Path]) -> Dataset:
    """Load every ``root/<subject_id>/`` directory, sorted by subject id."""
    root = Path(root)
    if not root.is_dir():
        raise MissingFile(root)
    subjects = [load_subject(d) for d in sorted(p for p in root.iterdir() if p.is_dir())]
    subjects.sort(key=lambda record: record.meta.id)
    dataset = Dataset(subjects)
    logger.info(f"Loaded {len(dataset)} subjects from {root}")
    return dataset


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

Aligned = TypeVar("Aligned", UniformSeries, UniformTriaxial, LabelSeries)


def align_overlap(series: Sequence[Aligned], rate: float = 1.0) -> List[Aligned]:
    """Crop uniform series to their common span ``[max(start), min(start + n))``.

    All inputs must share ``rate`` and sit on the same sample grid.
    """
    if not series:
        return []
    for s in series:
        if not math.isclose(s.rate, rate):
            raise ValueError(f"align_overlap expects {rate} Hz inputs, got {s.rate} Hz")
    start = max(s.start for s in series)
    end = min(s.start + len(s) / s.rate for s in series)
    if end <= start:
        raise NoOverlap(f"series spans do not overlap (latest start {start}, earliest end {end})")
    length = int(math.floor((end - start) * rate + 1e-9))
    if length < 1:
        raise NoOverlap("overlap is shorter than one sample")
    out = []
    for s in series:
        offset = (start - s.start) * rate
        index = int(round(offset))
        if abs(offset - index) > 1e-6:
            raise ValueError("series are not on a common sample grid")
        out.append(s.crop(index, length))
    return out
