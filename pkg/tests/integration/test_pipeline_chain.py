"""Integration tests for the preprocessing and evaluation chain on generated data.

These tests run over the session-scoped synthetic dataset:
- PAEE derived from breath data against the generator's ground truth
- Leave-one-subject-out evaluation of the linear model
- Fold isolation and reproducible training
"""
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd
import pytest

from paeekit.config import CnnLstmConfig, Config, TrainConfig
from paeekit.data import Dataset, SensorLocation, UniformSeries, align_overlap
from paeekit.evaluation import EvaluationPair, loso, r_squared, run_grid
from paeekit.features import Composition
from paeekit.pipeline import PreparedSubject

from tests.helpers import make_prepared

TINY_NETWORK = Config(
    cnn_lstm=CnnLstmConfig(conv_channels=(4, 4), lstm_hidden=6),
    train=TrainConfig(epochs=1, batch_size=64, seed=5),
)


def _truth(synthetic_root: Path, subject_id: str) -> UniformSeries:
    frame = pd.read_csv(synthetic_root / subject_id / "truth_paee.csv")
    t = frame["t_s"].to_numpy()
    return UniformSeries(float(t[0]), 1.0, frame["paee_wkg"].to_numpy())


@pytest.mark.integration
def test_prepared_subjects_are_aligned(prepared_subjects: List[PreparedSubject], synthetic_dataset: Dataset):
    """Test every prepared series shares one 1 Hz grid and carries activity labels."""
    assert [s.id for s in prepared_subjects] == synthetic_dataset.ids
    for subject in prepared_subjects:
        n = len(subject.paee)
        assert n > 100
        assert len(subject.labels) == n
        for location in SensorLocation:
            assert subject.acc[location].start == subject.paee.start
            assert len(subject.acc[location]) == n
        assert "Mopping" in set(subject.labels.values)
        assert subject.rmr.vo2 > 0


@pytest.mark.integration
def test_derived_paee_tracks_ground_truth(prepared_subjects: List[PreparedSubject], synthetic_root: Path):
    """Test PAEE from breath data explains most of the generator's true PAEE."""
    for subject in prepared_subjects:
        derived, truth = align_overlap([subject.paee, _truth(synthetic_root, subject.id)])
        score = r_squared(EvaluationPair(predictions=derived.values, truth=truth.values))
        assert score > 0.95, f"{subject.id}: R² {score:.3f}"


@pytest.mark.integration
def test_loso_pelvis_beats_wrist(prepared_subjects: List[PreparedSubject]):
    """Test the linear model does better on the pelvis than on a wrist."""
    results = run_grid(prepared_subjects, [Composition.PELVIS, Composition.LEFT_WRIST], ["LR"])
    pelvis, wrist = results
    assert pelvis.subjects == wrist.subjects == [s.id for s in prepared_subjects]
    assert not pelvis.failures and not wrist.failures
    assert pelvis.metric("r2").mean() > wrist.metric("r2").mean()
    assert pelvis.metric("r2").mean() > 0.5


@pytest.mark.integration
def test_held_out_targets_never_reach_training(prepared_subjects: List[PreparedSubject]):
    """Test changing one subject's PAEE only changes the other folds."""
    target = prepared_subjects[1]
    altered = make_prepared(
        target.id,
        {loc: target.acc[loc].values for loc in SensorLocation},
        target.paee.values * 3.0 + 1.0,
        start=target.paee.start,
        labels=list(target.labels.values),
    )
    swapped = [altered if s.id == target.id else s for s in prepared_subjects]

    before = loso(prepared_subjects, Composition.PELVIS, "LR")
    after = loso(swapped, Composition.PELVIS, "LR")
    for fold_before, fold_after in zip(before.folds, after.folds):
        if fold_before.subject == target.id:
            np.testing.assert_array_equal(fold_before.predictions, fold_after.predictions)
        else:
            assert not np.array_equal(fold_before.predictions, fold_after.predictions)


@pytest.mark.integration
@pytest.mark.slow
def test_cnn_lstm_folds_are_reproducible(prepared_subjects: List[PreparedSubject]):
    """Test two runs with the same seeds give identical predictions."""
    first = loso(prepared_subjects, Composition.THREE, "CNN-LSTM", TINY_NETWORK)
    second = loso(prepared_subjects, Composition.THREE, "CNN-LSTM", TINY_NETWORK, max_workers=2)
    assert first.subjects == second.subjects
    for a, b in zip(first.folds, second.folds):
        np.testing.assert_array_equal(a.predictions, b.predictions)
        assert a.r2 == b.r2
