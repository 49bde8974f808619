"""Run configuration and its JSON form."""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from railfuse.audio import AudioConfig
from railfuse.errors import ConfigError
from railfuse.scene import DetectorNoise, SceneGenConfig, confusion_from_ambiguity
from railfuse.vit import ViTConfig

DEFAULT_IOU_GRID = (0.3, 0.5, 0.7)


@dataclass
class RunConfig:
    seed: int = 0
    n_scenes: int = 550
    scene: SceneGenConfig = field(default_factory=SceneGenConfig)
    audio: AudioConfig = field(default_factory=AudioConfig)
    detector: DetectorNoise = field(default_factory=DetectorNoise)
    vit: ViTConfig = field(default_factory=ViTConfig)
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_GRID
    prob_threshold: float = 0.25
    label_iou: float = 0.3
    folds: int = 1
    val_fraction: float = 0.2
    holdout_fraction: float = 0.1  # slice of each training split used for early stopping

    def validate(self) -> None:
        self.scene.validate()
        self.vit.validate()
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be positive")
        if not self.iou_thresholds or any(not 0.0 < t <= 1.0 for t in self.iou_thresholds):
            raise ConfigError("IoU thresholds must be non-empty and lie in (0, 1]")
        if not 0.0 <= self.prob_threshold <= 1.0:
            raise ConfigError("prob_threshold must lie in [0, 1]")
        if self.folds < 1:
            raise ConfigError("folds must be at least 1")
        self.detector.confusion_matrix(len(self.scene.classes))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        return from_dict(cls, data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


def standard_benchmark(seed: int = 2024, n_scenes: int = 1000, folds: int = 10) -> RunConfig:
    """The reference synthetic benchmark: ambiguity 0.6, 10 random splits."""
    ambiguity = 0.6
    return RunConfig(
        seed=seed,
        n_scenes=n_scenes,
        scene=SceneGenConfig(ambiguity=ambiguity, boxes_per_scene=(1, 2)),
        audio=AudioConfig(shift_sigma=0.01, dilate_sigma=0.01),
        detector=DetectorNoise(
            miss_rate=0.05,
            false_positive_rate=0.2,
            jitter=8.0,
            confusion=confusion_from_ambiguity(ambiguity),
        ),
        vit=ViTConfig(embed_dim=16, depth=1, num_heads=4, mlp_ratio=2, learning_rate=1e-3, batch_size=64),
        folds=folds,
    )


# -- generic dataclass coercion ---------------------------------------------------------


def _coerce(hint, value):
    if value is None:
        return None
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        options = [a for a in args if a is not type(None)]
        return _coerce(options[0], value) if len(options) == 1 else value
    if dataclasses.is_dataclass(hint):
        return from_dict(hint, value)
    if origin is tuple:
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v) for v in value)
        return tuple(_coerce(a, v) for a, v in zip(args, value)) if args else tuple(value)
    if origin is dict:
        kt, vt = args or (Any, Any)
        return {k: _coerce(vt, v) for k, v in value.items()}
    if hint is float and isinstance(value, int):
        return float(value)
    return value


def from_dict(cls, data: dict[str, Any]):
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    return cls(**{k: _coerce(hints[k], v) for k, v in data.items()})
