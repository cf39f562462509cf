"""
Experiment configuration: one JSON file validated up front.

A ``pydantic.ValidationError`` surfaces as ConfigError, a missing file as
DataIOError, and data directories are checked before any compute starts.
"""

from __future__ import annotations

import json
import os
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.data.events import Geometry, Modality
from src.data.synth import SynthKind
from src.models.architectures import MODEL_ZOO, ModelSpec, parse_spec
from src.models.train import TrainConfig
from src.utils.errors import ConfigError, DataIOError


class SynthSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Literal["synth"] = "synth"
    synth_kind: SynthKind | None = None
    classes: int = Field(4, ge=2)
    samples_per_class: int = Field(200, ge=2)
    seed: int = 0
    test_fraction: float = Field(0.25, gt=0, lt=1)
    events_per_sample: int | None = Field(None, ge=1)


class FileSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Literal["files"] = "files"
    kind: Literal["evt", "nmnist"] = "evt"
    train_dir: str
    test_dir: str
    validate_events: bool = True


DataSource = Union[SynthSource, FileSource]


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    models: list[str] = list(MODEL_ZOO)
    modalities: list[Modality] = [Modality.VISUAL, Modality.AUDIO]
    dual: bool = False
    joint_model: str = "M4"

    @field_validator("models")
    @classmethod
    def _known_models(cls, models: list[str]) -> list[str]:
        unknown = [m for m in models if m not in MODEL_ZOO]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose from {list(MODEL_ZOO)}")
        return models

    @field_validator("modalities")
    @classmethod
    def _single_modalities(cls, modalities: list[Modality]) -> list[Modality]:
        if Modality.DUAL in modalities:
            raise ValueError("grid modalities are visual/audio; set dual=true for the joint model")
        return modalities

    @field_validator("joint_model")
    @classmethod
    def _joint_uses_hgrn(cls, joint_model: str) -> str:
        if joint_model not in MODEL_ZOO or not MODEL_ZOO[joint_model].uses_hgrn:
            raise ValueError("joint_model must be an hgrn-backed variant (M4 or M5)")
        return joint_model


class EngramOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    per_class: int = Field(100, ge=1)
    var_threshold: float = Field(0.95, gt=0, le=1)
    classes: list[int] | None = None
    models: list[str] | None = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int
    output_dir: str = "outputs"
    data: dict[Modality, DataSource] = {}
    grid: GridConfig = GridConfig()
    model: dict = {}
    train: TrainConfig = TrainConfig()
    engram: EngramOptions = EngramOptions()
    tracking_uri: str | None = None
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _grid_is_runnable(self) -> ExperimentConfig:
        if not self.grid.models or not self.grid.modalities:
            raise ValueError("grid needs at least one (model, modality) cell")
        missing = [m.value for m in self.grid.modalities if m not in self.data]
        if missing:
            raise ValueError(f"no data source configured for {missing}")
        if self.grid.dual and not {Modality.VISUAL, Modality.AUDIO} <= self.data.keys():
            raise ValueError("grid.dual needs both visual and audio data sources")
        if {"modality", "memory"} & self.model.keys():
            raise ValueError("model overrides cannot set modality or memory; the grid decides them")
        return self

    def cells(self) -> list[tuple[str, Modality]]:
        return [(m, mod) for m in self.grid.models for mod in self.grid.modalities]

    def spec_for(self, model_id: str, modality: Modality | str) -> ModelSpec:
        body = dict(self.model)
        body.update(modality=Modality(modality), memory=MODEL_ZOO[model_id])
        return parse_spec(body)

    def geometry(self, modality: Modality) -> Geometry:
        dims = self.spec_for(self.grid.models[0], modality).dims
        if modality is Modality.VISUAL:
            return Geometry(dims.visual_size, dims.visual_size, dims.polarities)
        return Geometry(dims.audio_channels, 1, 1)

    def n_threads(self) -> int:
        env = os.environ.get("SNN_THREADS")
        return max(1, int(env)) if env else self.threads

    def check_paths(self) -> None:
        """Fails fast on unreadable data directories."""
        for modality, source in self.data.items():
            if isinstance(source, FileSource):
                for path in (source.train_dir, source.test_dir):
                    if not os.path.isdir(path):
                        raise DataIOError(f"{modality.value} data directory not found: {path}")


def parse_config(body: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(body)
        for model_id, modality in cfg.cells():
            cfg.spec_for(model_id, modality)
        if cfg.grid.dual:
            cfg.spec_for(cfg.grid.joint_model, Modality.DUAL)
    except ValidationError as exc:
        raise ConfigError(f"Invalid experiment config: {exc}") from exc
    return cfg


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise DataIOError(f"Config file not found: {path}")
    with open(path) as fh:
        try:
            body = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Config {path} is not valid JSON: {exc}") from exc
    return parse_config(body)
