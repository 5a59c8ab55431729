"""Experiment configuration files (strict JSON schema)."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .lora import TARGET_KINDS, LoraConfig
from .modelzoo.config import config_to_dict, load_model_config, parse_model_config

SEED_ENV = "NEUROTUNE_SEED"
STUDIES = ("rank_sweep", "layer_ablation", "dropout_study")
Kind = Literal["attention", "fully_connected", "conv"]


def default_combos() -> list[list[str]]:
    singles = [[k] for k in TARGET_KINDS]
    pairs = [[a, b] for i, a in enumerate(TARGET_KINDS) for b in TARGET_KINDS[i + 1 :]]
    return singles + pairs


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending key path."""


class HarnessBlock(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(20, ge=1)
    folds: int = Field(10, ge=2)
    batch_size: int = Field(32, ge=1)
    eval_batch_size: int = Field(128, ge=1)
    lr: Optional[float] = Field(None, gt=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    workers: int = Field(1, ge=1)
    mode: Literal["full", "head_only", "lora"] = "lora"
    ranks: list[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16], min_length=1)
    layer_combos: list[list[Kind]] = Field(default_factory=default_combos, min_length=1)
    dropouts: list[float] = Field(default_factory=lambda: [0.0, 0.5], min_length=1)
    r_prime: Optional[int] = Field(None, ge=1)
    studies: list[Literal["rank_sweep", "layer_ablation", "dropout_study"]] = Field(
        default_factory=lambda: list(STUDIES), min_length=1
    )

    @field_validator("ranks")
    @classmethod
    def _ranks(cls, v):
        if any(r < 1 for r in v) or len(set(v)) != len(v):
            raise ValueError("ranks must be distinct positive integers")
        return sorted(v)

    @field_validator("dropouts")
    @classmethod
    def _dropouts(cls, v):
        if any(not 0.0 <= p < 1.0 for p in v):
            raise ValueError("dropout probabilities must lie in [0, 1)")
        return v

    @field_validator("layer_combos")
    @classmethod
    def _combos(cls, v):
        if any(not c for c in v):
            raise ValueError("layer combinations must be nonempty")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "experiment"
    model: Union[str, dict]
    model_overrides: dict = Field(default_factory=dict)
    data: Optional[str] = None
    pipeline: Literal["auto", "labram", "neurogpt", "raw"] = "auto"
    threshold_mm: float = Field(30.0, gt=0)
    lora: LoraConfig = Field(default_factory=LoraConfig)
    harness: HarnessBlock = Field(default_factory=HarnessBlock)
    seed: int = 0
    output_dir: str = "runs"
    backbone_checkpoint: Optional[str] = None

    def resolved_model(self):
        if isinstance(self.model, dict):
            return parse_model_config({**self.model, **self.model_overrides})
        return load_model_config(self.model, **self.model_overrides)

    def fingerprint(self) -> str:
        """Hash of everything that determines run outcomes (not output paths or worker count)."""
        core = self.model_dump(mode="json", exclude={"output_dir", "name"})
        core["harness"].pop("workers")
        core["model"] = config_to_dict(self.resolved_model())
        core.pop("model_overrides")
        blob = json.dumps(core, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def format_validation_error(exc: ValidationError, source: str = "config", prefix: str = "") -> str:
    lines = [f"{source}: invalid configuration"]
    for err in exc.errors():
        loc = ".".join([prefix] * bool(prefix) + [str(p) for p in err["loc"]]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "\n".join(lines)


def parse_experiment_config(data: dict, base_dir=None, env=None) -> ExperimentConfig:
    """Validate ``data``; relative paths resolve against ``base_dir`` and
    ``NEUROTUNE_SEED`` in ``env`` overrides the master seed."""
    env = os.environ if env is None else env
    data = dict(data)
    if env.get(SEED_ENV):
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    if base_dir is not None:
        base = Path(base_dir)
        for key in ("data", "output_dir", "backbone_checkpoint"):
            if isinstance(data.get(key), str) and not os.path.isabs(data[key]):
                data[key] = str(base / data[key])
        model = data.get("model")
        if isinstance(model, str) and model.endswith(".json") and not os.path.isabs(model):
            data["model"] = str(base / model)
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc
    try:
        cfg.resolved_model()
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc, prefix="model")) from exc
    except FileNotFoundError as exc:
        raise ConfigError(f"model: {exc}") from exc
    return cfg


def load_experiment_config(path, env=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        return parse_experiment_config(data, path.parent, env)
    except ConfigError as exc:
        raise ConfigError(str(exc).replace("config:", f"{path}:", 1)) from exc
