"""
Synthetic audio-analyser outputs.

No waveform is ever produced. Each event carries what an analyser would
report: the time window, a class-probability vector, a normalised peak
measure and the predicted class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from railfuse.errors import ConfigError, TaxonomyError
from railfuse.scene import REJECTION_CLASS, BoundingBox, Scene

DEFAULT_PEAK_INTERVALS = {
    "Nothing": (0.0, 0.2),
    "Surface defect": (0.3, 0.6),
    "Rupture": (0.8, 1.0),
}


@dataclass(frozen=True)
class AudioEvent:
    t_start: float
    t_end: float
    probs: tuple[float, ...]
    peak: float
    label: int

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if not self.t_start < self.t_end:
            raise ValueError(f"empty event window [{self.t_start}, {self.t_end}]")
        if not 0.0 <= self.peak <= 1.0:
            raise ValueError(f"peak {self.peak} outside [0, 1]")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("event probabilities must lie on the simplex")
        if int(np.argmax(self.probs)) != self.label:
            raise ValueError("predicted class must be the argmax of the probabilities")


@dataclass(frozen=True)
class PeakIntervalTable:
    intervals: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_PEAK_INTERVALS))

    def __post_init__(self):
        for name, (a, b) in self.intervals.items():
            if not 0.0 <= a < b <= 1.0:
                raise ConfigError(f"bad peak interval for {name!r}: ({a}, {b})")

    def bounds(self, name: str) -> tuple[float, float]:
        try:
            return self.intervals[name]
        except KeyError:
            raise TaxonomyError(f"no peak interval for class {name!r}") from None


def sample_peak(name: str, table: PeakIntervalTable, rng) -> float:
    a, b = table.bounds(name)
    return a + (b - a) * rng.random()


def sample_probs(chosen: int, k: int, rng) -> np.ndarray:
    """Class-probability vector dominated by `chosen`.

    The chosen class draws from U(0.7, 1); the following classes, taken
    cyclically, each draw uniformly from the mass still unassigned, and the
    last one takes the remainder.
    """
    if k < 2:
        raise ValueError("need at least two classes")
    p = np.zeros(k)
    p[chosen] = 0.7 + 0.3 * rng.random()
    remaining = 1.0 - p[chosen]
    for offset in range(1, k - 1):
        idx = (chosen + offset) % k
        p[idx] = remaining * rng.random()
        remaining -= p[idx]
    p[(chosen + k - 1) % k] = remaining
    return p


@dataclass
class AudioConfig:
    shift_sigma: float = 0.0  # seconds
    dilate_sigma: float = 0.0  # seconds, applied symmetrically
    ambient_nothing: bool = False
    peak_intervals: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_PEAK_INTERVALS))

    @property
    def table(self) -> PeakIntervalTable:
        return PeakIntervalTable({k: tuple(v) for k, v in self.peak_intervals.items()})


def box_time_window(box: BoundingBox, image_height: int, duration: float) -> tuple[float, float]:
    """Time span covered by the vertical extent of a box."""
    return box.y_min / image_height * duration, box.y_max / image_height * duration


def synth_event_for_box(
    box: BoundingBox,
    label: int,
    scene: Scene,
    config: AudioConfig,
    table: PeakIntervalTable,
    rng,
) -> AudioEvent:
    if not box.within(scene.image_width, scene.image_height):
        raise ValueError(f"box {box.as_tuple()} outside the image")
    name = scene.taxonomy.name(label)
    t0, t1 = box_time_window(box, scene.image_height, scene.duration)
    shift = rng.normal(0.0, config.shift_sigma) if config.shift_sigma > 0 else 0.0
    dilate = rng.normal(0.0, config.dilate_sigma) if config.dilate_sigma > 0 else 0.0
    t0 = min(max(t0 + shift - dilate, 0.0), scene.duration)
    t1 = min(max(t1 + shift + dilate, 0.0), scene.duration)
    if not t0 < t1:
        raise ValueError("event window collapsed after jitter and clamping")
    peak = sample_peak(name, table, rng)
    probs = sample_probs(label, scene.taxonomy.K, rng)
    return AudioEvent(t0, t1, tuple(probs), peak, label)


def synth_scene_events(scene: Scene, config: AudioConfig, rng) -> list[AudioEvent]:
    """One event per audible ground-truth box, in object order."""
    table = config.table
    events = []
    for gt in scene.objects:
        if scene.taxonomy.name(gt.label) == REJECTION_CLASS and not config.ambient_nothing:
            continue
        events.append(synth_event_for_box(gt.box, gt.label, scene, config, table, rng))
    return events
