"""
Experiment configuration.

Precedence: explicit overrides > YAML file > LATENTBIN_* environment (and .env) > defaults.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from binarization.ops import ScaleMode
from core.errors import UsageError
from training.optim import OptimizerHyper, OptimizerName, Schedule
from training.state import Decomposition

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path("./config/experiment_config.yaml")

# YAML sections whose keys are top-level fields
_FLAT_SECTIONS = ("model", "training", "output")
# YAML sections that map onto nested models
_NESTED_SECTIONS = ("optimizer", "schedule", "data")

# Fields that do not change what is computed up to a given step; epochs only
# sets where training stops, so a finished run can be resumed for longer
_UNHASHED = frozenset({"epochs", "output_dir", "log_level", "show_progress"})


class OptimizerSettings(BaseModel):
    name: OptimizerName = OptimizerName.ADAM
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: PositiveFloat = 1e-8
    rmsprop_alpha: float = Field(0.99, ge=0.0, lt=1.0)
    weight_decay: float = Field(0.0, ge=0.0)

    def hyper(self) -> OptimizerHyper:
        return OptimizerHyper(
            name=self.name,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            rmsprop_alpha=self.rmsprop_alpha,
            weight_decay=self.weight_decay,
        )


class LrDrop(BaseModel):
    epoch: int = Field(ge=0)
    multiplier: PositiveFloat


class ScheduleSettings(BaseModel):
    initial_lr: PositiveFloat = 1e-3
    drops: List[LrDrop] = Field(default_factory=lambda: [LrDrop(epoch=4, multiplier=0.1)])

    def schedule(self) -> Schedule:
        return Schedule.from_pairs(self.initial_lr, [(d.epoch, d.multiplier) for d in self.drops])


class DataSettings(BaseModel):
    format: Literal["idx", "csv", "synthetic"] = "synthetic"
    train_images: Optional[Path] = None  # idx
    train_labels: Optional[Path] = None
    test_images: Optional[Path] = None
    test_labels: Optional[Path] = None
    train_csv: Optional[Path] = None  # csv
    test_csv: Optional[Path] = None
    max_train_examples: Optional[PositiveInt] = None
    synthetic_train: PositiveInt = 2000
    synthetic_test: PositiveInt = 500
    synthetic_noise: PositiveFloat = 48.0  # pixel-unit std around the class prototypes


class ExperimentConfig(BaseSettings):
    """One training run, fully determined by these values."""

    model_config = SettingsConfigDict(
        env_prefix="LATENTBIN_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="ignore",
    )

    # Model
    architecture: Literal["reference"] = "reference"
    decomposition: Decomposition = Decomposition.NONE
    scale_mode: ScaleMode = ScaleMode.ANALYTIC
    widths: Tuple[PositiveInt, ...] = (16, 32)
    binarize_stem: bool = False
    svd_rank: Optional[PositiveInt] = None

    # Training
    seed: int
    epochs: PositiveInt = 5
    batch_size: PositiveInt = 64
    bn_momentum: float = Field(0.1, gt=0.0, le=1.0)

    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    schedule: ScheduleSettings = Field(default_factory=ScheduleSettings)
    data: DataSettings = Field(default_factory=DataSettings)

    # Output
    output_dir: Path = Path("./runs/default")
    log_level: str = "INFO"
    show_progress: bool = True

    @field_validator("widths")
    @classmethod
    def _two_or_more_widths(cls, v):
        if len(v) < 2:
            raise ValueError("widths needs the stem width and at least one stage width")
        return v


def _flatten_yaml(raw: Mapping[str, Any], source: str) -> Dict[str, Any]:
    fields = ExperimentConfig.model_fields
    flat: Dict[str, Any] = {}
    for section, body in raw.items():
        if section in _FLAT_SECTIONS:
            if not isinstance(body, Mapping):
                raise UsageError(f"{source}: section '{section}' must be a mapping")
            for key, value in body.items():
                if key not in fields or key in _NESTED_SECTIONS:
                    raise UsageError(f"{source}: unknown key '{section}.{key}'")
                flat[key] = value
        elif section in _NESTED_SECTIONS:
            flat[section] = body
        else:
            raise UsageError(f"{source}: unknown section '{section}'")
    return flat


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a YAML file plus explicit overrides.

    Raises:
        UsageError: missing file, malformed YAML, unknown keys or invalid values
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise UsageError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(raw, Mapping):
            raise UsageError(f"{path}: top level must be a mapping of sections")
        values = _flatten_yaml(raw, str(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = ExperimentConfig(**values)
    except ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    logger.debug("loaded config (hash %s)", config_hash(cfg)[:12])
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 hex digest of the canonical JSON form of everything that affects results."""
    payload = cfg.model_dump(mode="json", exclude=set(_UNHASHED))
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(cfg: ExperimentConfig) -> str:
    """YAML rendering in the sectioned layout load_config reads."""
    data = cfg.model_dump(mode="json")
    sections = {
        "model": {k: data[k] for k in ("architecture", "decomposition", "scale_mode", "widths", "binarize_stem", "svd_rank")},
        "training": {k: data[k] for k in ("seed", "epochs", "batch_size", "bn_momentum")},
        "optimizer": data["optimizer"],
        "schedule": data["schedule"],
        "data": data["data"],
        "output": {k: data[k] for k in ("output_dir", "log_level", "show_progress")},
    }
    return yaml.safe_dump(sections, sort_keys=False)
