"""Sliding windows over aligned 1 Hz series and the IAA_tot feature."""
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Mapping, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import SensorLocation, UniformSeries, UniformTriaxial
from .errors import LengthMismatch, MissingSensor, SeriesTooShort


class Composition(str, Enum):
    PELVIS = "pelvis-acc"
    THREE = "3-acc"
    LEFT_WRIST = "l-wrist-acc"
    RIGHT_WRIST = "r-wrist-acc"

    @property
    def sensors(self) -> Tuple[SensorLocation, ...]:
        return _COMPOSITION_SENSORS[self]

    @property
    def channels(self) -> int:
        return 3 * len(self.sensors)

    @property
    def is_com(self) -> bool:
        """True for compositions placed near the body's center of mass."""
        return self in (Composition.PELVIS, Composition.THREE)

    @classmethod
    def parse(cls, name: str) -> "Composition":
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown composition {name!r} (choose from {choices})") from None


_COMPOSITION_SENSORS = {
    Composition.PELVIS: (SensorLocation.PELVIS,),
    Composition.THREE: (SensorLocation.PELVIS, SensorLocation.LEFT_THIGH, SensorLocation.RIGHT_THIGH),
    Composition.LEFT_WRIST: (SensorLocation.LEFT_WRIST,),
    Composition.RIGHT_WRIST: (SensorLocation.RIGHT_WRIST,),
}


def iaa_tot(window: np.ndarray) -> float:
    """Sum of absolute acceleration over every axis and sample of a window."""
    return float(np.sum(np.abs(np.asarray(window, dtype=np.float64))))


@dataclass(frozen=True, eq=False)
class SupervisedWindow:
    tensor: np.ndarray
    iaa: np.ndarray
    target: float
    subject_id: str
    end_time: float


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Stacked supervised windows.

    ``tensors`` is (N, C, W), ``iaa`` is (N, S) with one column per sensor.
    """
    tensors: np.ndarray
    iaa: np.ndarray
    targets: np.ndarray
    end_times: np.ndarray
    target_times: np.ndarray
    subject_ids: np.ndarray

    def __post_init__(self):
        n = self.tensors.shape[0]
        for name in ("iaa", "targets", "end_times", "target_times", "subject_ids"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"WindowSet.{name} has {getattr(self, name).shape[0]} rows, expected {n}")

    def __len__(self) -> int:
        return self.tensors.shape[0]

    def __getitem__(self, index: int) -> SupervisedWindow:
        return SupervisedWindow(
            tensor=self.tensors[index],
            iaa=self.iaa[index],
            target=float(self.targets[index]),
            subject_id=str(self.subject_ids[index]),
            end_time=float(self.end_times[index]),
        )

    def __iter__(self) -> Iterator[SupervisedWindow]:
        for i in range(len(self)):
            yield self[i]

    @property
    def channels(self) -> int:
        return self.tensors.shape[1]

    @property
    def window(self) -> int:
        return self.tensors.shape[2]

    def subset(self, mask: np.ndarray) -> "WindowSet":
        return WindowSet(
            self.tensors[mask], self.iaa[mask], self.targets[mask],
            self.end_times[mask], self.target_times[mask], self.subject_ids[mask],
        )

    @classmethod
    def from_windows(cls, windows: Sequence[SupervisedWindow], horizon: int = 1) -> "WindowSet":
        if not windows:
            raise ValueError("cannot stack an empty window list")
        end_times = np.array([w.end_time for w in windows], dtype=np.float64)
        return cls(
            tensors=np.stack([w.tensor for w in windows]).astype(np.float64),
            iaa=np.stack([w.iaa for w in windows]).astype(np.float64),
            targets=np.array([w.target for w in windows], dtype=np.float64),
            end_times=end_times,
            target_times=end_times + horizon,
            subject_ids=np.array([w.subject_id for w in windows], dtype=object),
        )

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        if not sets:
            raise ValueError("cannot concatenate zero window sets")
        return cls(
            tensors=np.concatenate([s.tensors for s in sets]),
            iaa=np.concatenate([s.iaa for s in sets]),
            targets=np.concatenate([s.targets for s in sets]),
            end_times=np.concatenate([s.end_times for s in sets]),
            target_times=np.concatenate([s.target_times for s in sets]),
            subject_ids=np.concatenate([s.subject_ids for s in sets]),
        )


def window_count(n: int, window: int = 30, step: int = 1, horizon: int = 1) -> int:
    if n < window + horizon:
        return 0
    return (n - window - horizon) // step + 1


def build_supervised_windows(
    acc: Mapping[SensorLocation, UniformTriaxial],
    paee: UniformSeries,
    composition: Composition,
    window: int = 30,
    step: int = 1,
    horizon: int = 1,
    subject_id: str = "",
) -> WindowSet:
    """Slice aligned series into windows that forecast PAEE ``horizon`` seconds ahead.

    Window k covers samples ``[k*step, k*step + window)``; its target is
    ``paee[k*step + window + horizon - 1]``.
    """
    missing = [loc.value for loc in composition.sensors if loc not in acc]
    if missing:
        raise MissingSensor(f"composition {composition.value} needs {missing}")
    n = len(paee)
    for location in composition.sensors:
        series = acc[location]
        if len(series) != n or series.start != paee.start:
            raise LengthMismatch(
                f"{location.value} covers {len(series)} s from {series.start}, "
                f"PAEE covers {n} s from {paee.start}; align the series first"
            )
    count = window_count(n, window, step, horizon)
    if count == 0:
        raise SeriesTooShort(
            f"{n} aligned seconds cannot hold a {window}-s window plus a {horizon}-s horizon"
        )

    stacked = np.concatenate([acc[loc].values for loc in composition.sensors], axis=0)
    # (C, n - window + 1, window) -> (count, C, window)
    views = sliding_window_view(stacked, window, axis=1)[:, : count * step : step]
    tensors = np.ascontiguousarray(np.transpose(views, (1, 0, 2)), dtype=np.float64)

    n_sensors = len(composition.sensors)
    iaa = np.abs(tensors).reshape(count, n_sensors, 3 * window).sum(axis=2)

    starts = np.arange(count) * step
    end_index = starts + window - 1
    target_index = end_index + horizon
    sample_times = paee.times
    return WindowSet(
        tensors=tensors,
        iaa=iaa,
        targets=np.asarray(paee.values, dtype=np.float64)[target_index],
        end_times=sample_times[end_index],
        target_times=sample_times[target_index],
        subject_ids=np.full(count, subject_id, dtype=object),
    )


def composition_names() -> List[str]:
    return [c.value for c in Composition]
