"""Self-describing JSON container for fitted models.

Layout (keys sorted, floats in shortest round-trip form)::

    {"composition": "3-acc", "config": {...}, "extras": {...},
     "format": "paeekit-model", "held_out": "S03", "model": "LR",
     "params": {"<name>": {"shape": [..], "values": [..]}}, "seed": 42, "version": 1}

``values`` holds the array in C order. Reading an artifact back reproduces the
model bit for bit.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import CnnLstmConfig, TrainConfig
from .cnn_lstm import PARAM_NAMES, CnnLstmModel, CnnLstmWeights, TrainHistory
from .linear import LinearModel

ARTIFACT_FORMAT = "paeekit-model"
ARTIFACT_VERSION = 1


class ParamArray(BaseModel):
    shape: List[int]
    values: List[float]

    @model_validator(mode="after")
    def _check_size(self) -> "ParamArray":
        if int(np.prod(self.shape, dtype=np.int64)) != len(self.values):
            raise ValueError(f"shape {self.shape} does not match {len(self.values)} values")
        return self

    @classmethod
    def of(cls, array: np.ndarray) -> "ParamArray":
        array = np.asarray(array, dtype=np.float64)
        return cls(shape=list(array.shape), values=array.ravel().tolist())

    def to_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64).reshape(self.shape)


class ModelArtifact(BaseModel):
    format: Literal["paeekit-model"] = ARTIFACT_FORMAT
    version: Literal[1] = ARTIFACT_VERSION
    model: Literal["LR", "CNN-LSTM"]
    composition: str
    held_out: Optional[str] = None
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)
    params: Dict[str, ParamArray]
    extras: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(protected_namespaces=())

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelArtifact":
        return cls.model_validate(json.loads(text))

    def to_model(self) -> Union[LinearModel, CnnLstmModel]:
        arrays = {name: p.to_array() for name, p in self.params.items()}
        if self.model == "LR":
            return LinearModel(weights=arrays["weights"], intercept=float(arrays["intercept"][0]))
        return CnnLstmModel(
            weights=CnnLstmWeights.from_dict({name: arrays[name] for name in PARAM_NAMES}),
            input_mean=arrays["input_mean"],
            input_std=arrays["input_std"],
            target_mean=float(self.extras["target_mean"]),
            target_std=float(self.extras["target_std"]),
            history=TrainHistory(losses=[float(v) for v in self.extras.get("losses", [])]),
        )


def linear_artifact(model: LinearModel, composition: str, held_out: Optional[str], seed: int) -> ModelArtifact:
    return ModelArtifact(
        model="LR",
        composition=composition,
        held_out=held_out,
        seed=seed,
        params={
            "weights": ParamArray.of(model.weights),
            "intercept": ParamArray.of(np.array([model.intercept])),
        },
        extras={"equation": model.equation()},
    )


def cnn_lstm_artifact(
    model: CnnLstmModel,
    cfg: CnnLstmConfig,
    tcfg: TrainConfig,
    composition: str,
    held_out: Optional[str],
) -> ModelArtifact:
    params = {name: ParamArray.of(array) for name, array in model.weights.as_dict().items()}
    params["input_mean"] = ParamArray.of(model.input_mean)
    params["input_std"] = ParamArray.of(model.input_std)
    return ModelArtifact(
        model="CNN-LSTM",
        composition=composition,
        held_out=held_out,
        seed=tcfg.seed,
        config={"cnn_lstm": cfg.model_dump(mode="json"), "train": tcfg.model_dump(mode="json")},
        params=params,
        extras={
            "target_mean": model.target_mean,
            "target_std": model.target_std,
            "losses": list(model.history.losses),
        },
    )


def save_artifact(artifact: ModelArtifact, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(artifact.to_json())
    return path


def load_artifact(path: Union[str, Path]) -> ModelArtifact:
    return ModelArtifact.from_json(Path(path).read_text())
