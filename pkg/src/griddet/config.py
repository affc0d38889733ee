"""Experiment configuration: nested dataclasses with YAML round-trip."""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .grid import GridSpec
from .model import MODES, TrainConfig
from .synth import SynthConfig


def _gridspec_to_dict(g: GridSpec) -> dict:
    return {"scales": list(g.scales), "overlaps": list(g.overlaps)}


def _gridspec_from_dict(d: dict) -> GridSpec:
    return GridSpec(tuple(d["scales"]), tuple(d["overlaps"]))


@dataclass
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    grid_train: GridSpec = field(
        default_factory=lambda: GridSpec((2, 5, 10), (0.9, 0.8, 0.7)))
    grid_test: GridSpec = field(
        default_factory=lambda: GridSpec((2, 5, 10), (0.7, 0.5, 0.0)))
    train: TrainConfig = field(default_factory=TrainConfig)
    s_test: int = 5
    mode: str = "gcnn"
    score_threshold: float = 0.05
    nms_iou: float = 0.3
    iou_match: float = 0.5
    output_dir: str = "out"
    n_train: int = 300
    n_test: int = 100

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.s_test < 0:
            raise ValueError("s_test must be >= 0")

    def to_dict(self) -> dict:
        return {
            "synth": self.synth.to_dict(),
            "grid_train": _gridspec_to_dict(self.grid_train),
            "grid_test": _gridspec_to_dict(self.grid_test),
            "train": self.train.to_dict(),
            "s_test": self.s_test,
            "mode": self.mode,
            "score_threshold": self.score_threshold,
            "nms_iou": self.nms_iou,
            "iou_match": self.iou_match,
            "output_dir": self.output_dir,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "synth" in d:
            d["synth"] = SynthConfig.from_dict(d["synth"])
        if "grid_train" in d:
            d["grid_train"] = _gridspec_from_dict(d["grid_train"])
        if "grid_test" in d:
            d["grid_test"] = _gridspec_from_dict(d["grid_test"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    return ExperimentConfig.from_dict(doc)


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True)
