import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from dusss.errors import ConfigError
from dusss.models import AugmentSpec, MergeMode, SSSConfig, TgStage

# Load environment variables from .env file
load_dotenv()


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSettings(Section):
    image_size: int = Field(default=32, ge=8)
    patch: int = Field(default=8, ge=1)
    d: int = Field(default=32, ge=2)
    d_s: int = Field(default=16, ge=1)
    d_u: int = Field(default=16, ge=1)
    l_max: int = Field(default=16, ge=2)
    seg_channels: int = Field(default=8, ge=1)
    tau_init: float = Field(default=0.07, ge=0.01, le=100.0)
    dtype: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _geometry(self) -> "ModelSettings":
        problems = []
        if self.image_size % self.patch:
            problems.append(f"image_size {self.image_size} is not divisible by patch {self.patch}")
        else:
            ratio = self.image_size // self.patch
            if ratio & (ratio - 1):
                problems.append(f"image_size / patch = {ratio} must be a power of two")
        if self.image_size % 4:
            problems.append(f"image_size {self.image_size} must be divisible by 4 for the U-Net")
        if problems:
            raise ValueError("; ".join(problems))
        return self


class ContrastiveSettings(Section):
    use_sss: bool = True
    use_imc: bool = True


class PretrainSettings(Section):
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=32, ge=2)
    lr: float = Field(default=1e-3, gt=0.0)
    w_tg: float = Field(default=0.1, ge=0.0)


class SemiSettings(Section):
    alpha: float = Field(default=0.99, ge=0.0, le=1.0)
    merge_mode: MergeMode = MergeMode.LITERAL
    w_semi: float = Field(default=1.0, ge=0.0)
    w_tg: float = Field(default=0.1, ge=0.0)
    use_text: bool = True
    use_unlabeled: bool = True
    tg_stage: TgStage = TgStage.BOTH
    finetune_grounding: bool = False
    labeled_frac: float = 0.5
    epochs: int = Field(default=100, ge=1)
    patience: int = Field(default=20, ge=1)
    batch_size: int = Field(default=8, ge=1)
    unlabeled_batch_size: int = Field(default=8, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    student_noise: float = Field(default=0.05, ge=0.0)

    @field_validator("labeled_frac")
    @classmethod
    def _supported_fraction(cls, value: float) -> float:
        if not any(math.isclose(value, f) for f in (0.25, 0.5, 1.0)):
            raise ValueError(f"labeled_frac must be one of 0.25, 0.5, 1.0, got {value}")
        return value


class PathSettings(Section):
    data_dir: str = "data"
    run_dir: str = "runs/default"
    vlm_checkpoint: Optional[str] = None


class RunConfig(BaseSettings):
    """Every knob of a run; environment variables use the DUSSS_ prefix"""

    model_config = SettingsConfigDict(
        env_prefix="DUSSS_",
        env_nested_delimiter="__",
        extra="forbid",
        protected_namespaces=(),
    )

    seed: int = 0
    model: ModelSettings = Field(default_factory=ModelSettings)
    sss: SSSConfig = Field(default_factory=SSSConfig)
    contrastive: ContrastiveSettings = Field(default_factory=ContrastiveSettings)
    pretrain: PretrainSettings = Field(default_factory=PretrainSettings)
    semi: SemiSettings = Field(default_factory=SemiSettings)
    augment: AugmentSpec = Field(default_factory=AugmentSpec)
    paths: PathSettings = Field(default_factory=PathSettings)

    def flat(self) -> Dict[str, Any]:
        """Dotted-key view, as written to run directories"""
        return flatten(self.model_dump(mode="json", by_alias=True))


def flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, prefix=f"{name}."))
        else:
            out[name] = value
    return out


def unflatten(data: Mapping[str, Any]) -> Dict[str, Any]:
    """{"sss.a": 2} -> {"sss": {"a": 2}}; nested mappings are merged"""
    out: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            value = unflatten(value)
        parts = str(key).split(".")
        node = out
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError([f"{key}: '{part}' is both a value and a section"])
            node = child
        leaf = parts[-1]
        if isinstance(value, dict) and isinstance(node.get(leaf), dict):
            node[leaf] = {**node[leaf], **value}
        else:
            node[leaf] = value
    return out


def parse_override(item: str) -> Dict[str, Any]:
    """'semi.alpha=0.9' -> {"semi.alpha": 0.9}; the value is parsed as YAML"""
    if "=" not in item:
        raise ConfigError([f"{item}: expected key=value"])
    key, raw = item.split("=", 1)
    return {key.strip(): yaml.safe_load(raw) if raw.strip() else ""}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such config file"])
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if path.suffix in (".yml", ".yaml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return data


def _violations(exc: ValidationError) -> List[str]:
    lines = []
    for error in exc.errors():
        loc = ".".join(str(p) for p in error["loc"]) or "<root>"
        lines.append(f"{loc}: {error['msg']}")
    return lines


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """File values, then dotted overrides (flags win); all violations reported together"""
    data = unflatten(read_config_file(path)) if path else {}
    if overrides:
        merged = flatten(data)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        data = unflatten(merged)
    try:
        return RunConfig(**data)
    except ValidationError as exc:
        raise ConfigError(_violations(exc)) from None


config: RunConfig = RunConfig()
