"""Per-subject metrics and the leave-one-subject-out harness."""
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from rich.progress import Progress

from .config import CnnLstmConfig, Config, TrainConfig, WindowConfig
from .data import Dataset
from .errors import ConstantTruth, EmptyDataset, EvaluationError, FeatureError, LengthMismatch, ZeroMeanTruth
from .features import Composition, WindowSet
from .logging import get_logger
from .models import ModelArtifact, cnn_lstm_artifact, cnn_lstm_train, fit_ols, linear_artifact
from .parallel import ParallelProcessor
from .pipeline import PreparedSubject, prepare_dataset

logger = get_logger(__name__)

RESULTS_HEADER = ["composition", "model", "subject", "nrmse", "r2"]
TRACE_HEADER = ["t_s", "paee_true_wkg", "paee_pred_wkg"]
LABELS_HEADER = ["t_s", "label"]
FAILURES_HEADER = ["composition", "model", "subject", "error"]

TRACE_RE = re.compile(r"^trace_(?P<composition>.+?)_(?P<model>LR|CNN-LSTM)_(?P<subject>.+)\.csv$")


@dataclass(frozen=True, eq=False)
class EvaluationPair:
    predictions: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.predictions, dtype=np.float64)
        y = np.asarray(self.truth, dtype=np.float64)
        if x.shape != y.shape or x.ndim != 1:
            raise LengthMismatch(f"predictions {x.shape} and truth {y.shape} must be equal-length vectors")
        if len(y) < 2:
            raise EvaluationError("at least two samples are needed to evaluate")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise EvaluationError("predictions and truth must be finite")
        object.__setattr__(self, "predictions", x)
        object.__setattr__(self, "truth", y)


def nrmse(pair: EvaluationPair) -> float:
    """Root-mean-squared error divided by the mean of the truth."""
    y_bar = float(np.mean(pair.truth))
    if abs(y_bar) < 1e-12:
        raise ZeroMeanTruth("mean of the ground truth is zero; NRMSE is undefined")
    return float(np.sqrt(np.mean((pair.truth - pair.predictions) ** 2)) / y_bar)


def r_squared(pair: EvaluationPair, literal: bool = False) -> float:
    """Coefficient of determination.

    ``literal=True`` uses the spread of the predictions around the mean truth
    as the denominator instead of the spread of the truth.
    """
    y_bar = float(np.mean(pair.truth))
    ss_res = float(np.sum((pair.truth - pair.predictions) ** 2))
    spread = pair.predictions if literal else pair.truth
    ss_tot = float(np.sum((spread - y_bar) ** 2))
    if ss_tot <= 0.0:
        raise ConstantTruth("denominator sum of squares is zero; R² is undefined")
    return 1.0 - ss_res / ss_tot


@dataclass(eq=False)
class FoldResult:
    subject: str
    nrmse: float
    r2: float
    times: np.ndarray
    truth: np.ndarray
    predictions: np.ndarray
    artifact: Optional[ModelArtifact] = None


@dataclass(frozen=True)
class FoldFailure:
    subject: str
    error: str


@dataclass(eq=False)
class ExperimentResult:
    composition: str
    model: str
    folds: List[FoldResult] = field(default_factory=list)
    failures: List[FoldFailure] = field(default_factory=list)

    @property
    def subjects(self) -> List[str]:
        return [f.subject for f in self.folds]

    def metric(self, name: str) -> np.ndarray:
        return np.array([getattr(f, name) for f in self.folds], dtype=np.float64)


class _FoldRunner:
    """Trains and scores one held-out subject for a (composition, model) cell."""

    def __init__(
        self,
        windows: Dict[str, WindowSet],
        composition: Composition,
        model: str,
        cnn: CnnLstmConfig,
        train: TrainConfig,
        keep_artifacts: bool,
    ):
        self.windows = windows
        self.composition = composition
        self.model = model
        self.cnn = cnn.model_copy(update={"in_channels": composition.channels})
        self.train = train
        self.keep_artifacts = keep_artifacts

    def __call__(self, subject: str) -> FoldResult:
        others = [w for sid, w in self.windows.items() if sid != subject]
        if not others:
            raise EmptyDataset(f"no training subjects left when holding out {subject}")
        train = WindowSet.concat(others)
        test = self.windows[subject]

        artifact = None
        if self.model == "LR":
            fitted = fit_ols(train.iaa, train.targets)
            predictions = fitted.predict(test.iaa)
            if self.keep_artifacts:
                artifact = linear_artifact(fitted, self.composition.value, subject, self.train.seed)
        else:
            stride = self.train.window_stride
            thinned = WindowSet.concat([w.subset(np.s_[::stride]) for w in others])
            fitted_nn = cnn_lstm_train(thinned, self.cnn, self.train)
            predictions = fitted_nn.predict(test)
            if self.keep_artifacts:
                artifact = cnn_lstm_artifact(fitted_nn, self.cnn, self.train, self.composition.value, subject)

        pair = EvaluationPair(predictions=predictions, truth=test.targets)
        return FoldResult(
            subject=subject,
            nrmse=nrmse(pair),
            r2=r_squared(pair),
            times=test.target_times,
            truth=test.targets,
            predictions=predictions,
            artifact=artifact,
        )


def loso(
    subjects: Union[Dataset, Sequence[PreparedSubject]],
    composition: Composition,
    model: str,
    config: Optional[Config] = None,
    max_workers: int = 1,
    keep_artifacts: bool = False,
    progress: Optional[Progress] = None,
) -> ExperimentResult:
    """Leave-one-subject-out evaluation of one (composition, model) cell.

    Folds are ordered by subject id. A subject whose windows or fold fails is
    reported in ``failures`` and the remaining folds still run.
    """
    config = config or Config()
    if isinstance(subjects, Dataset):
        subjects = prepare_dataset(subjects, config.preprocess, max_workers=max_workers)
    prepared = sorted(subjects, key=lambda s: s.id)
    if len(prepared) < 2:
        raise EvaluationError(f"leave-one-subject-out needs at least two subjects, got {len(prepared)}")

    result = ExperimentResult(composition=composition.value, model=model)
    windows: Dict[str, WindowSet] = {}
    for subject in prepared:
        try:
            windows[subject.id] = subject.windows(composition, config.window)
        except FeatureError as e:
            logger.warning(f"{composition.value}/{model}: subject {subject.id} skipped: {e}")
            result.failures.append(FoldFailure(subject.id, f"{type(e).__name__}: {e}"))

    runner = _FoldRunner(windows, composition, model, config.cnn_lstm, config.train, keep_artifacts)
    processor = ParallelProcessor(max_workers=max_workers)
    work_items = processor.process_batch(
        list(windows),
        runner,
        progress=progress,
        description=f"[cyan]{composition.value} / {model}",
    )
    for item in work_items:
        if item.error is not None:
            logger.warning(f"{composition.value}/{model}: fold {item.input_data} failed: {item.error}")
            result.failures.append(FoldFailure(item.input_data, f"{type(item.error).__name__}: {item.error}"))
        else:
            result.folds.append(item.result)
            logger.debug(
                f"{composition.value}/{model} fold {item.input_data}: NRMSE {item.result.nrmse:.3f}, "
                f"R² {item.result.r2:.3f} ({item.processing_time:.2f}s)"
            )
    result.failures.sort(key=lambda f: f.subject)
    return result


def run_grid(
    subjects: Sequence[PreparedSubject],
    compositions: Sequence[Composition],
    models: Sequence[str],
    config: Optional[Config] = None,
    max_workers: int = 1,
    keep_artifacts: bool = False,
    progress: Optional[Progress] = None,
) -> List[ExperimentResult]:
    """One ExperimentResult per (composition, model), compositions outermost."""
    return [
        loso(subjects, composition, model, config, max_workers, keep_artifacts, progress)
        for composition in compositions
        for model in models
    ]


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------


def _to_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(frame.to_csv(index=False, lineterminator="\n"))
    return path


def results_frame(results: Sequence[ExperimentResult]) -> pd.DataFrame:
    rows = [
        {"composition": r.composition, "model": r.model, "subject": f.subject, "nrmse": f.nrmse, "r2": f.r2}
        for r in results
        for f in r.folds
    ]
    return pd.DataFrame(rows, columns=RESULTS_HEADER)


def write_results(results: Sequence[ExperimentResult], out_dir: Path) -> Path:
    return _to_csv(results_frame(results), Path(out_dir) / "results.csv")


def read_results(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    frame = pd.read_csv(path, dtype={"composition": str, "model": str, "subject": str})
    if list(frame.columns) != RESULTS_HEADER:
        raise EvaluationError(f"{path}: expected header {','.join(RESULTS_HEADER)}")
    return frame


def trace_path(out_dir: Path, composition: str, model: str, subject: str) -> Path:
    return Path(out_dir) / f"trace_{composition}_{model}_{subject}.csv"


def write_trace(out_dir: Path, composition: str, model: str, fold: FoldResult) -> Path:
    frame = pd.DataFrame({
        "t_s": fold.times,
        "paee_true_wkg": fold.truth,
        "paee_pred_wkg": fold.predictions,
    }, columns=TRACE_HEADER)
    return _to_csv(frame, trace_path(out_dir, composition, model, fold.subject))


def write_labels(out_dir: Path, subject: PreparedSubject) -> Path:
    frame = pd.DataFrame({"t_s": subject.labels.times, "label": subject.labels.values}, columns=LABELS_HEADER)
    return _to_csv(frame, Path(out_dir) / f"labels_{subject.id}.csv")


def write_failures(results: Sequence[ExperimentResult], out_dir: Path) -> Optional[Path]:
    """Writes failures.csv when any fold failed; returns its path or None."""
    rows = [
        {"composition": r.composition, "model": r.model, "subject": f.subject, "error": f.error}
        for r in results
        for f in r.failures
    ]
    if not rows:
        return None
    return _to_csv(pd.DataFrame(rows, columns=FAILURES_HEADER), Path(out_dir) / "failures.csv")
