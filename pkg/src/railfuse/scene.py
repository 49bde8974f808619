"""
Class taxonomy, scene geometry, synthetic scene rendering and the mock detector.

Conventions used throughout the package:

* pixel boxes are ``(x_min, y_min, x_max, y_max)`` in image coordinates;
* feature tensors are stored ``(channels, rows, cols)``, rows being the
  vertical image axis, which doubles as the time axis of the audio frame;
* grid indices reported to users are 1-based ``(row, col)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from railfuse.errors import ConfigError, PlacementError, TaxonomyError

DEFAULT_CLASSES = ("Rupture", "Surface defect", "Nothing")
REJECTION_CLASS = "Nothing"

# Object proportions of the reference corpus (Rupture, Surface defect, Nothing).
REFERENCE_COUNTS = (8156, 3026, 10990)
REFERENCE_MIX = tuple(c / sum(REFERENCE_COUNTS) for c in REFERENCE_COUNTS)

# RNG stream tags, combined with (seed, scene id) into a SeedSequence.
STREAM_SCENE = 0
STREAM_AUDIO = 1
STREAM_DETECTOR = 2


def scene_rng(seed: int, scene_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(scene_id), int(stream)]))


@dataclass(frozen=True)
class Taxonomy:
    names: tuple[str, ...] = DEFAULT_CLASSES

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise TaxonomyError("taxonomy needs at least two classes")
        if len(set(names)) != len(names):
            raise TaxonomyError(f"duplicate class names in {names}")
        if names[-1] != REJECTION_CLASS:
            raise TaxonomyError(f"the rejection class {REJECTION_CLASS!r} must be last")

    @property
    def K(self) -> int:
        return len(self.names)

    @property
    def rejection(self) -> int:
        return self.K - 1

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TaxonomyError(f"unknown class {name!r}; taxonomy is {list(self.names)}") from None

    def name(self, idx: int) -> str:
        if not 0 <= idx < self.K:
            raise TaxonomyError(f"class index {idx} out of range for K={self.K}")
        return self.names[idx]


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def within(self, image_width: float, image_height: float) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max <= image_width and self.y_max <= image_height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class LayerConfig:
    layer_id: int
    width: int
    height: int
    channels: int

    def __post_init__(self):
        if min(self.width, self.height, self.channels) < 1:
            raise ConfigError(f"layer extents must be positive: {self}")


LAYER_PRESETS = {
    7: LayerConfig(7, 20, 20, 128),
    16: LayerConfig(16, 40, 40, 64),
    19: LayerConfig(19, 20, 20, 128),
}


def layer_preset(layer_id: int) -> LayerConfig:
    try:
        return LAYER_PRESETS[layer_id]
    except KeyError:
        raise ConfigError(f"no preset for layer {layer_id}; known: {sorted(LAYER_PRESETS)}") from None


@dataclass(frozen=True)
class GroundTruth:
    box: BoundingBox
    label: int


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    label: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class Scene:
    scene_id: int
    image_width: int
    image_height: int
    layer: LayerConfig
    features: np.ndarray  # float32, (channels, rows, cols)
    objects: list[GroundTruth]
    events: list = field(default_factory=list)  # list[AudioEvent]
    duration: float = 1.0
    taxonomy: Taxonomy = field(default_factory=Taxonomy)

    def __post_init__(self):
        expected = (self.layer.channels, self.layer.height, self.layer.width)
        if self.features.shape != expected:
            raise ValueError(f"feature tensor shape {self.features.shape} != {expected}")
        if self.duration <= 0:
            raise ValueError("scene duration must be positive")
        for gt in self.objects:
            self.taxonomy.name(gt.label)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.image_width == other.image_width
            and self.image_height == other.image_height
            and self.layer == other.layer
            and self.duration == other.duration
            and self.taxonomy == other.taxonomy
            and self.objects == other.objects
            and self.events == other.events
            and self.features.dtype == other.features.dtype
            and np.array_equal(self.features, other.features)
        )


@dataclass
class SceneGenConfig:
    image_width: int = 320
    image_height: int = 320
    layer_id: int = 7
    class_mix: tuple[float, ...] = REFERENCE_MIX
    boxes_per_scene: tuple[int, int] = (1, 3)
    box_size: tuple[int, int] = (48, 128)
    ambiguity: float = 0.0
    background: float = 0.1
    noise: float = 0.05
    duration: float = 1.0
    max_retries: int = 200
    classes: tuple[str, ...] = DEFAULT_CLASSES

    def validate(self) -> None:
        k = len(self.classes)
        if len(self.class_mix) != k:
            raise ConfigError(f"class_mix has {len(self.class_mix)} entries for {k} classes")
        if any(p < 0 for p in self.class_mix) or abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise ConfigError("class_mix must be a probability vector")
        lo, hi = self.boxes_per_scene
        if not 0 <= lo <= hi:
            raise ConfigError(f"bad boxes_per_scene {self.boxes_per_scene}")
        smin, smax = self.box_size
        if not 1 <= smin <= smax:
            raise ConfigError(f"bad box_size {self.box_size}")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ConfigError("ambiguity must lie in [0, 1]")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")

    @property
    def layer(self) -> LayerConfig:
        return layer_preset(self.layer_id)


# -- rendering ----------------------------------------------------------------------
#
# The patterns below are invented stand-ins for detector activations: a sharp
# blob for Rupture, a flat plateau for Nothing (a normal object) and a
# textured plateau for Surface defect. `ambiguity` pulls the Rupture and
# Nothing signatures toward their average, so at 1.0 they are identical.


def _cell_box(box: BoundingBox, cfg: SceneGenConfig, layer: LayerConfig) -> tuple[float, float, float, float]:
    sx = layer.width / cfg.image_width
    sy = layer.height / cfg.image_height
    return box.x_min * sx, box.y_min * sy, box.x_max * sx, box.y_max * sy


def _render_pattern(
    name: str, box: BoundingBox, cfg: SceneGenConfig, layer: LayerConfig, rng: np.random.Generator
) -> np.ndarray:
    x0, y0, x1, y1 = _cell_box(box, cfg, layer)
    rows = np.arange(layer.height)[:, None] + 0.5
    cols = np.arange(layer.width)[None, :] + 0.5
    inside = (rows >= y0) & (rows < y1) & (cols >= x0) & (cols < x1)
    if not inside.any():
        inside[min(int(0.5 * (y0 + y1)), layer.height - 1), min(int(0.5 * (x0 + x1)), layer.width - 1)] = True
    cy, cx = 0.5 * (y0 + y1), 0.5 * (x0 + x1)
    sy, sx = max(0.3 * (y1 - y0), 0.5), max(0.3 * (x1 - x0), 0.5)
    blob = np.exp(-0.5 * (((rows - cy) / sy) ** 2 + ((cols - cx) / sx) ** 2))
    plateau = np.where(inside, 0.55, 0.0)
    blob = np.where(inside, np.maximum(blob, 0.3), 0.0)
    a = cfg.ambiguity
    if name == "Rupture":
        pat = (1 - a) * blob + a * 0.5 * (blob + plateau)
    elif name == REJECTION_CLASS:
        pat = (1 - a) * plateau + a * 0.5 * (blob + plateau)
    else:
        texture = rng.uniform(0.0, 0.5, size=plateau.shape)
        pat = np.where(inside, 0.35 + texture, 0.0)
    return pat


def _place_box(cfg: SceneGenConfig, placed: list[BoundingBox], rng: np.random.Generator) -> BoundingBox:
    smin, smax = cfg.box_size
    for _ in range(cfg.max_retries):
        w = int(rng.integers(smin, smax + 1))
        h = int(rng.integers(smin, smax + 1))
        if w > cfg.image_width or h > cfg.image_height:
            continue
        x = int(rng.integers(0, cfg.image_width - w + 1))
        y = int(rng.integers(0, cfg.image_height - h + 1))
        box = BoundingBox(float(x), float(y), float(x + w), float(y + h))
        if all(iou(box, other) == 0.0 for other in placed):
            return box
    raise PlacementError(f"could not place a box after {cfg.max_retries} attempts")


def generate_scene(config: SceneGenConfig, seed: int, scene_id: int = 0) -> Scene:
    """Render one synthetic scene (features and ground truth, no audio events)."""
    config.validate()
    taxonomy = Taxonomy(tuple(config.classes))
    layer = config.layer
    rng = scene_rng(seed, scene_id, STREAM_SCENE)

    lo, hi = config.boxes_per_scene
    n_boxes = int(rng.integers(lo, hi + 1))
    objects: list[GroundTruth] = []
    boxes: list[BoundingBox] = []
    for _ in range(n_boxes):
        label = int(rng.choice(taxonomy.K, p=np.asarray(config.class_mix)))
        box = _place_box(config, boxes, rng)
        boxes.append(box)
        objects.append(GroundTruth(box, label))

    signal = config.background + config.noise * rng.standard_normal((layer.height, layer.width))
    for gt in objects:
        signal = np.maximum(signal, _render_pattern(taxonomy.name(gt.label), gt.box, config, layer, rng))

    gains = rng.uniform(0.5, 1.5, size=(layer.channels, 1, 1))
    chan_noise = config.noise * rng.standard_normal((layer.channels, layer.height, layer.width))
    features = (gains * signal[None] + chan_noise).astype(np.float32)
    return Scene(
        scene_id=scene_id,
        image_width=config.image_width,
        image_height=config.image_height,
        layer=layer,
        features=features,
        objects=objects,
        duration=config.duration,
        taxonomy=taxonomy,
    )


# -- mock detector ---------------------------------------------------------------------


@dataclass
class DetectorNoise:
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0  # mean number of spurious boxes per scene
    jitter: float = 0.0  # std of corner displacement, pixels
    confusion: Sequence[Sequence[float]] | None = None  # rows: true class, cols: predicted
    tp_confidence: tuple[float, float] = (0.5, 1.0)
    fp_confidence: tuple[float, float] = (0.1, 0.8)
    fp_class_probs: Sequence[float] | None = None

    def confusion_matrix(self, k: int) -> np.ndarray:
        c = np.eye(k) if self.confusion is None else np.asarray(self.confusion, dtype=float)
        if c.shape != (k, k):
            raise ConfigError(f"confusion matrix must be {k}x{k}, got {c.shape}")
        if np.any(c < 0) or np.any(np.abs(c.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigError("confusion matrix rows must lie on the probability simplex")
        return c

    def fp_probs(self, k: int) -> np.ndarray:
        if self.fp_class_probs is None:
            return np.full(k, 1.0 / k)
        p = np.asarray(self.fp_class_probs, dtype=float)
        if p.shape != (k,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigError("fp_class_probs must be a probability vector of length K")
        return p


def confusion_from_ambiguity(ambiguity: float, k: int = 3, base_error: float = 0.05) -> list[list[float]]:
    """Detector confusion for a visual ambiguity level.

    Rupture and Nothing trade `ambiguity / 4` of their mass with each other;
    every class also leaks `base_error` uniformly to the remaining classes.
    """
    c = np.eye(k) * (1.0 - base_error)
    for i in range(k):
        for j in range(k):
            if i != j:
                c[i, j] = base_error / (k - 1)
    rupture, nothing = 0, k - 1
    swap = 0.25 * ambiguity
    for src, dst in ((rupture, nothing), (nothing, rupture)):
        move = swap * c[src, src]
        c[src, src] -= move
        c[src, dst] += move
    return c.tolist()


def _jitter_box(box: BoundingBox, sigma: float, width: int, height: int, rng: np.random.Generator) -> BoundingBox:
    d = rng.normal(0.0, sigma, size=4) if sigma > 0 else np.zeros(4)
    x0 = float(np.clip(box.x_min + d[0], 0, width - 1))
    y0 = float(np.clip(box.y_min + d[1], 0, height - 1))
    x1 = float(np.clip(box.x_max + d[2], x0 + 1, width))
    y1 = float(np.clip(box.y_max + d[3], y0 + 1, height))
    return BoundingBox(x0, y0, x1, y1)


def mock_detect(scene: Scene, noise: DetectorNoise, seed: int) -> list[Detection]:
    """Emit noisy detections for a scene, standing in for a trained detector."""
    k = scene.taxonomy.K
    confusion = noise.confusion_matrix(k)
    fp_probs = noise.fp_probs(k)
    rng = scene_rng(seed, scene.scene_id, STREAM_DETECTOR)
    out: list[Detection] = []
    for gt in scene.objects:
        if rng.random() < noise.miss_rate:
            continue
        box = _jitter_box(gt.box, noise.jitter, scene.image_width, scene.image_height, rng)
        label = int(rng.choice(k, p=confusion[gt.label]))
        conf = float(rng.uniform(*noise.tp_confidence))
        out.append(Detection(box, label, conf))
    n_fp = int(rng.poisson(noise.false_positive_rate)) if noise.false_positive_rate > 0 else 0
    for _ in range(n_fp):
        w = float(rng.uniform(16, min(128, scene.image_width)))
        h = float(rng.uniform(16, min(128, scene.image_height)))
        x = float(rng.uniform(0, scene.image_width - w))
        y = float(rng.uniform(0, scene.image_height - h))
        label = int(rng.choice(k, p=fp_probs))
        conf = float(rng.uniform(*noise.fp_confidence))
        out.append(Detection(BoundingBox(x, y, x + w, y + h), label, conf))
    return out
