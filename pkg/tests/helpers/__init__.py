"""Test helpers and utilities."""
from typing import Dict, Optional

import numpy as np

from paeekit.data import (
    BreathSeries,
    LabelSeries,
    RawTriaxialSeries,
    SensorLocation,
    Sex,
    SubjectMeta,
    SubjectRecord,
    UniformSeries,
    UniformTriaxial,
)
from paeekit.energetics import RmrEstimate
from paeekit.pipeline import PreparedSubject


def make_breaths(duration_s: float, vo2: float = 250.0, rer: float = 0.85, label: str = "Supine rest",
                 interval_s: float = 3.0, start_s: float = 0.5) -> BreathSeries:
    """Evenly spaced breaths with constant gas flows."""
    t = np.arange(start_s, duration_s, interval_s)
    return BreathSeries(t, np.full(len(t), vo2), np.full(len(t), vo2 * rer), [label] * len(t))


def make_acc(n: int = 60, seed: int = 0, rate: float = 30.0) -> RawTriaxialSeries:
    rng = np.random.default_rng(seed)
    t = np.round(np.arange(n) / rate, 4)
    axes = np.round(rng.normal(0.0, 1.0, size=(3, n)), 4)
    axes[2] += 9.81
    return RawTriaxialSeries(t, axes[0], axes[1], axes[2])


def make_record(subject_id: str = "S01", mass_kg: float = 70.0, height_cm: float = 175.0,
                age: int = 30, rest_s: float = 1830.0, acc_samples: int = 60) -> SubjectRecord:
    meta = SubjectMeta(subject_id, Sex.F, age, height_cm, mass_kg)
    acc = {loc: make_acc(acc_samples, seed=i) for i, loc in enumerate(SensorLocation)}
    rest = make_breaths(rest_s)
    adl = make_breaths(60.0, vo2=600.0, label="Mopping")
    return SubjectRecord(meta=meta, acc=acc, rest=rest, adl=adl)


def make_prepared(subject_id: str, acc_values: Dict[SensorLocation, np.ndarray], paee: np.ndarray,
                  start: float = 0.0, labels: Optional[list] = None) -> PreparedSubject:
    """A PreparedSubject built directly from aligned 1 Hz arrays."""
    meta = SubjectMeta(subject_id, Sex.M, 30, 175.0, 70.0)
    acc = {loc: UniformTriaxial(start, 1.0, np.asarray(values, dtype=np.float64))
           for loc, values in acc_values.items()}
    n = len(paee)
    return PreparedSubject(
        meta=meta,
        acc=acc,
        paee=UniformSeries(start, 1.0, np.asarray(paee, dtype=np.float64)),
        labels=LabelSeries(start, 1.0, labels if labels is not None else ["Mopping"] * n),
        rmr=RmrEstimate(250.0, 212.5),
    )


def linear_subject(subject_id: str, n: int, seed: int, coef: float = 0.01, intercept: float = 0.5,
                   window: int = 30) -> PreparedSubject:
    """Subject whose PAEE one second after each window is an exact linear function of pelvis IAA."""
    rng = np.random.default_rng(seed)
    acc = {loc: rng.normal(0.0, 1.0 + 0.5 * rng.random(), size=(3, n)) for loc in SensorLocation}
    pelvis = np.abs(acc[SensorLocation.PELVIS])
    paee = np.full(n, intercept)
    for k in range(window, n):
        paee[k] = coef * pelvis[:, k - window:k].sum() + intercept
    return make_prepared(subject_id, acc, paee)
