"""Run configuration, loaded from YAML and validated with pydantic."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .datasets import TASK_TYPES
from .embedding import MODEL_KINDS
from .graph import DEFAULT_LABEL_PREDICATES, DEFAULT_SAMEAS_PREDICATES
from .mapping import MappingConfigError, build_chain

# scenario name -> (mapper chain, accounting)
SCENARIOS = {"PK": ("precision", "known"), "PA": ("precision", "all"), "RA": ("recall", "all")}


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KGConfig(_Strict):
    paths: list[str] = Field(min_length=1)
    label_predicates: list[str] = Field(default_factory=lambda: list(DEFAULT_LABEL_PREDICATES), min_length=1)
    sameas_predicates: list[str] = Field(default_factory=lambda: list(DEFAULT_SAMEAS_PREDICATES), min_length=1)
    strict: bool = False


class EmbeddingConfig(_Strict):
    kind: str
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, v: str) -> str:
        if v not in MODEL_KINDS:
            raise ValueError(f"unknown embedding kind {v!r}; expected one of {MODEL_KINDS}")
        return v


ChainSpec = list[Union[str, dict[str, float]]]


class TaskConfig(_Strict):
    folds: int = Field(10, ge=2)
    # task type -> algorithm names; missing task types use every algorithm
    algorithms: dict[str, list[str]] = Field(default_factory=dict)
    # task type -> algorithm -> list of hyperparameter assignments
    grids: dict[str, dict[str, list[dict[str, Any]]]] = Field(default_factory=dict)

    @field_validator("algorithms", "grids")
    @classmethod
    def _known_tasks(cls, v: dict) -> dict:
        bad = sorted(set(v) - set(TASK_TYPES))
        if bad:
            raise ValueError(f"unknown task type(s) {bad}")
        return v


class ANNConfig(_Strict):
    M: int = Field(16, ge=2)
    ef_construction: int = Field(200, ge=1)
    ef_search: int = Field(200, ge=1)


class Config(_Strict):
    kg: KGConfig
    embeddings: list[EmbeddingConfig] = Field(min_length=1)
    chains: dict[str, ChainSpec] = Field(
        default_factory=lambda: {"precision": ["uri", {"label": 1.0}], "recall": ["uri", {"label": 0.7}]}
    )
    manifest: str
    tasks: TaskConfig = Field(default_factory=TaskConfig)
    ann: ANNConfig = Field(default_factory=ANNConfig)
    seed: int = 0
    threads: int = Field(1, ge=1)
    output_dir: str = "kgeval-out"
    deterministic: bool = False
    base_dir: str = "."

    @field_validator("chains")
    @classmethod
    def _valid_chains(cls, v: dict[str, ChainSpec]) -> dict[str, ChainSpec]:
        if not v:
            raise ValueError("at least one mapper chain is required")
        bad = sorted(set(v) - {"precision", "recall"})
        if bad:
            raise ValueError(f"unknown chain(s) {bad}; expected 'precision' and/or 'recall'")
        for name, spec in v.items():
            try:
                build_chain(spec)
            except MappingConfigError as exc:
                raise ValueError(f"chain {name!r}: {exc}") from None
        return v

    @model_validator(mode="after")
    def _unique_kinds(self) -> Config:
        kinds = [e.kind for e in self.embeddings]
        if len(set(kinds)) != len(kinds):
            raise ValueError("embedding kinds must be unique")
        return self

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def scenarios(self) -> list[str]:
        return [s for s, (chain, _) in SCENARIOS.items() if chain in self.chains]

    @property
    def out(self) -> Path:
        return self.resolve(self.output_dir)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "\n".join(lines)


def config_from_dict(raw: dict[str, Any], base_dir: str | Path = ".", check_paths: bool = True) -> Config:
    raw = dict(raw)
    raw.setdefault("base_dir", str(base_dir))
    try:
        cfg = Config.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError("invalid configuration:\n" + _format_errors(exc)) from None
    if check_paths:
        missing = [p for p in [*cfg.kg.paths, cfg.manifest] if not cfg.resolve(p).exists()]
        if missing:
            raise ConfigError(f"configured path(s) do not exist: {', '.join(missing)}")
    return cfg


def load_config(path: str | Path, check_paths: bool = True) -> Config:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    return config_from_dict(raw, path.parent, check_paths)
