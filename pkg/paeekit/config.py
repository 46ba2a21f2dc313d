from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigInvalid

COMPOSITION_NAMES = ("pelvis-acc", "3-acc", "l-wrist-acc", "r-wrist-acc")
MODEL_NAMES = ("LR", "CNN-LSTM")


class PreprocessConfig(BaseModel):
    """Filter and energetics constants applied before windowing."""
    butter_order: int = Field(default=4, ge=1)
    butter_cutoff_hz: float = Field(default=6.0, gt=0)
    gravity_order: int = Field(default=2, ge=1)
    gravity_cutoff_hz: float = Field(default=0.25, gt=0)
    savgol_window: int = 21
    savgol_polyorder: int = Field(default=1, ge=0)
    rmr_discard_s: float = Field(default=300.0, ge=0)

    model_config = ConfigDict(protected_namespaces=())


class WindowConfig(BaseModel):
    window: int = Field(default=30, ge=1)
    step: int = Field(default=1, ge=1)
    horizon: int = Field(default=1, ge=1)

    model_config = ConfigDict(protected_namespaces=())


class CnnLstmConfig(BaseModel):
    """Architecture of the convolutional-recurrent estimator."""
    in_channels: int = 3
    """3 for a single accelerometer, 9 for the pelvis + thighs composition."""

    conv_channels: Tuple[int, int] = (16, 32)
    kernel_size: int = 3
    lstm_hidden: int = Field(default=32, gt=0)
    seed: int = 0

    model_config = ConfigDict(protected_namespaces=())

    @field_validator("in_channels")
    @classmethod
    def _check_channels(cls, value: int) -> int:
        if value not in (3, 9):
            raise ValueError("in_channels must be 3 or 9")
        return value

    @field_validator("conv_channels")
    @classmethod
    def _check_conv(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if any(c <= 0 for c in value):
            raise ValueError("conv channel counts must be positive")
        return value

    @field_validator("kernel_size")
    @classmethod
    def _check_kernel(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")
        return value


class TrainConfig(BaseModel):
    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=64, ge=1)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 42
    window_stride: int = Field(default=10, ge=1)
    """CNN-LSTM folds train on every n-th window of each training subject; evaluation keeps every window."""
    divergence_factor: float = Field(default=1e4, gt=1)
    """Training stops with DivergedLoss when a batch loss exceeds this multiple of the initial loss."""

    model_config = ConfigDict(protected_namespaces=())


class GeneratorConfig(BaseModel):
    """Knobs of the synthetic protocol generator."""
    n_subjects: int = Field(default=9, ge=2)
    seed: int = 42
    acc_rate_hz: float = Field(default=30.0, gt=0)
    breath_interval_s: float = Field(default=3.0, gt=0)
    breath_jitter: float = Field(default=0.3, ge=0, lt=1)
    rer: float = 0.85
    rer_sd: float = Field(default=0.02, ge=0)
    rmr_vo2_ml_kg_min: float = Field(default=3.3, gt=0)
    rmr_sd_fraction: float = Field(default=0.08, ge=0)
    rest_duration_s: float = Field(default=1830.0, gt=0)
    acc_noise_sd: float = Field(default=0.2, ge=0)
    gas_noise_sd: float = Field(default=40.0, ge=0)
    talking_artifact_rate: float = Field(default=0.5, ge=0)
    """Talking bursts per minute of ADL."""
    talking_artifact_ml_min: float = Field(default=150.0, ge=0)
    transition_tau_s: float = Field(default=30.0, gt=0)
    com_gain: float = Field(default=0.5, ge=0)
    """Acceleration amplitude (m/s^2) per W/kg at pelvis and thighs."""
    subject_gain_sd: float = Field(default=0.2, ge=0)
    activity_gain_sd: float = Field(default=0.2, ge=0)
    wrist_jitter_sd: float = Field(default=0.3, ge=0)
    wrist_scale: float = Field(default=1.0, ge=0)
    """Multiplies every activity's wrist_gain (0 silences the wrists)."""
    fitness_sd: float = Field(default=0.15, ge=0)
    x_duration_range_s: Tuple[float, float] = (120.0, 300.0)
    duration_scale: float = Field(default=1.0, gt=0, le=1)
    """Shrinks every activity (not the rest session); below 1 only for quick runs."""

    model_config = ConfigDict(protected_namespaces=())

    @field_validator("rer")
    @classmethod
    def _check_rer(cls, value: float) -> float:
        if not 0.7 <= value <= 1.0:
            raise ValueError("rer must lie in [0.7, 1.0]")
        return value

    @model_validator(mode="after")
    def _check_range(self) -> "GeneratorConfig":
        lo, hi = self.x_duration_range_s
        if not 0 < lo <= hi:
            raise ValueError("x_duration_range_s must satisfy 0 < min <= max")
        return self


class RunConfig(BaseModel):
    data: Optional[Path] = None
    out: Path = Field(default_factory=lambda: Path("runs/latest"))
    compositions: List[str] = Field(default_factory=lambda: list(COMPOSITION_NAMES))
    models: List[str] = Field(default_factory=lambda: list(MODEL_NAMES))
    seed: int = 42
    max_workers: int = Field(default=1, ge=1)
    save_models: bool = True

    model_config = ConfigDict(protected_namespaces=())

    @field_validator("compositions")
    @classmethod
    def _check_compositions(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one composition is required")
        unknown = [c for c in value if c not in COMPOSITION_NAMES]
        if unknown:
            raise ValueError(f"unknown compositions: {unknown}")
        return value

    @field_validator("models")
    @classmethod
    def _check_models(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one model is required")
        canonical = {m.upper(): m for m in MODEL_NAMES}
        out = []
        for name in value:
            key = name.upper()
            if key not in canonical:
                raise ValueError(f"unknown model: {name}")
            out.append(canonical[key])
        return out


class Config(BaseModel):
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    cnn_lstm: CnnLstmConfig = Field(default_factory=CnnLstmConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    model_config = ConfigDict(protected_namespaces=())


def parse_flat_config(text: str) -> Dict[str, Any]:
    """Parse ``section.key = value`` lines into a nested dictionary.

    Values are read as YAML scalars, so ``5`` is an int, ``true`` a bool and
    ``[pelvis-acc, 3-acc]`` a list.
    """
    data: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigInvalid(f"line {lineno}: empty key")
        node = data
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigInvalid(f"line {lineno}: {key} conflicts with an earlier value")
        node[leaf] = yaml.safe_load(value) if value else None
    return data


def format_flat_config(data: Dict[str, Any], prefix: str = "") -> List[str]:
    """Flatten a nested dictionary back into sorted ``key = value`` lines."""
    lines: List[str] = []
    for key in sorted(data):
        value = data[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            lines.extend(format_flat_config(value, prefix=f"{name}."))
        else:
            if isinstance(value, tuple):
                value = list(value)
            if isinstance(value, Path):
                value = str(value)
            rendered = yaml.safe_dump(value, default_flow_style=True, width=10_000).strip()
            if rendered.endswith("\n..."):
                rendered = rendered[: -len("\n...")].strip()
            lines.append(f"{name} = {rendered}")
    return lines


class ConfigManager:
    DEFAULT_CONFIG_PATHS = [
        Path("paeekit.yml"),
        Path("~/.config/paeekit/config.yml"),
    ]

    def __init__(self, config_path: Optional[str] = None, use_defaults: bool = True):
        self.config = self._load_config(config_path, use_defaults)

    def _load_config(self, config_path: Optional[str], use_defaults: bool) -> Config:
        """Load configuration from file or use defaults."""
        config_data: Dict[str, Any] = {}

        if config_path:
            path = Path(config_path)
            if not path.exists():
                raise ConfigInvalid(f"configuration file not found: {path}")
            config_data = self._read(path)
        elif use_defaults:
            for path in self.DEFAULT_CONFIG_PATHS:
                path = path.expanduser()
                if path.exists():
                    config_data = self._read(path)
                    break

        return self._build(config_data)

    @staticmethod
    def _read(path: Path) -> Dict[str, Any]:
        text = path.read_text()
        if path.suffix in (".yml", ".yaml"):
            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                raise ConfigInvalid(f"{path}: {exc}") from exc
            return data or {}
        return parse_flat_config(text)

    @staticmethod
    def _build(data: Dict[str, Any]) -> Config:
        try:
            return Config(**data)
        except ValidationError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def save_config(self, path: Optional[Path] = None) -> None:
        """Save current configuration to file."""
        save_path = path or self.DEFAULT_CONFIG_PATHS[0]
        self._write(self.config, save_path)

    @classmethod
    def generate_default_config(cls, path: Path) -> None:
        """Generate a default configuration file."""
        cls._write(Config(), path)

    @staticmethod
    def _write(config: Config, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        data = config.model_dump(mode="json")
        if path.suffix in (".yml", ".yaml"):
            with open(path, 'w') as f:
                yaml.safe_dump(data, f, default_flow_style=False, sort_keys=True)
        else:
            path.write_text("\n".join(format_flat_config(data)) + "\n")

    def update_config(self, updates: Dict) -> None:
        """Update configuration with new values."""
        current_dict = self.config.model_dump()
        self._deep_update(current_dict, updates)
        self.config = self._build(current_dict)

    def _deep_update(self, base_dict: Dict, update_dict: Dict) -> None:
        """Recursively update a dictionary, skipping None overrides."""
        for key, value in update_dict.items():
            if value is None:
                continue
            if (
                key in base_dict
                and isinstance(base_dict[key], dict)
                and isinstance(value, dict)
            ):
                self._deep_update(base_dict[key], value)
            else:
                base_dict[key] = value
