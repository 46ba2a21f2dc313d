"""Ordinary least squares on IAA_tot regressors."""
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import DimensionMismatch, RankDeficientWarning, TooFewSamples


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.intercept)):
            raise ValueError("linear model coefficients must be finite")

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_linear(self, X)

    def equation(self, names: Optional[Sequence[str]] = None) -> str:
        """Render as ``PAEE = 0.011 * IAA_tot + 1.632``."""
        if names is None:
            names = ["IAA_tot"] if self.n_features == 1 else [f"IAA_tot_{i + 1}" for i in range(self.n_features)]
        terms = [f"{w:.3f} * {name}" for w, name in zip(self.weights, names)]
        rendered = " + ".join(terms + [f"{self.intercept:.3f}"])
        return "PAEE = " + rendered.replace("+ -", "- ")


def _as_design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    if X.ndim != 2:
        raise DimensionMismatch(f"design matrix must be 2-D, got shape {X.shape}")
    return X


def fit_ols(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """Least-squares fit of ``y ~ X w + d`` with the intercept column appended.

    Rank-deficient designs get the minimum-norm solution and a
    :class:`RankDeficientWarning`.
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if len(y) != n:
        raise DimensionMismatch(f"{n} design rows but {len(y)} targets")
    if n <= p:
        raise TooFewSamples(f"need more samples than regressors, got n={n}, p={p}")

    design = np.hstack([X, np.ones((n, 1))])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < p + 1:
        warnings.warn(
            f"design matrix has rank {rank} < {p + 1}; returning the minimum-norm solution",
            RankDeficientWarning,
            stacklevel=2,
        )
    return LinearModel(weights=coef[:p], intercept=float(coef[p]))


def predict_linear(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = _as_design(X)
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model has {model.n_features} weights, design has {X.shape[1]} columns")
    return X @ model.weights + model.intercept
