"""
Experiment orchestration: detect, fuse, train the classifier and score both
the image-only and the fused variants over an IoU grid, once or over Z
random splits.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from railfuse.config import RunConfig
from railfuse.evaluation import ConfusionCounts, compute_metrics, greedy_match, overall, score_scene
from railfuse.fusion import SceneFusion
from railfuse.scene import Detection, Scene, mock_detect
from railfuse.stats import TTestResult, mean_std, unpaired_ttest, zfold_split
from railfuse.vit import TrainReport, ViTModel, train

logger = logging.getLogger(__name__)

VARIANTS = ("image_only", "fused")


@dataclass
class PreparedScene:
    scene: Scene
    detections: list[Detection]
    kept: list[int]  # indices of detections at or above the probability threshold
    fused: np.ndarray  # (len(kept), K, H, W)
    labels: np.ndarray  # classifier training label per kept detection


def training_labels(scene: Scene, detections: Sequence[Detection], kept: Sequence[int], label_iou: float) -> np.ndarray:
    """Class of the greedily matched ground truth at `label_iou`, else the rejection class."""
    labels = np.full(len(kept), scene.taxonomy.rejection, dtype=np.int64)
    matches = greedy_match([detections[i].box for i in kept], [g.box for g in scene.objects])
    for kd, g, v in matches:
        if v >= label_iou:
            labels[kd] = scene.objects[g].label
    return labels


def prepare_scenes(scenes: Sequence[Scene], cfg: RunConfig) -> list[PreparedScene]:
    out = []
    for scene in scenes:
        dets = mock_detect(scene, cfg.detector, cfg.seed)
        kept = [i for i, d in enumerate(dets) if d.confidence >= cfg.prob_threshold]
        fusion = SceneFusion(scene)
        k, layer = scene.taxonomy.K, scene.layer
        fused = (
            np.stack([fusion.fused(dets[i].box) for i in kept])
            if kept
            else np.zeros((0, k, layer.height, layer.width))
        )
        out.append(PreparedScene(scene, dets, kept, fused, training_labels(scene, dets, kept, cfg.label_iou)))
    return out


def _stack(prepared: Sequence[PreparedScene], idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    xs = [prepared[i].fused for i in idx if len(prepared[i].kept)]
    ys = [prepared[i].labels for i in idx if len(prepared[i].kept)]
    if not xs:
        p = prepared[0]
        return np.zeros((0, *p.fused.shape[1:])), np.zeros(0, dtype=np.int64)
    return np.concatenate(xs), np.concatenate(ys)


@dataclass
class ThresholdCounts:
    """Per-class counts of both variants at one IoU threshold."""

    iou: float
    image_only: list[ConfusionCounts]
    fused: list[ConfusionCounts]

    def variant(self, name: str) -> list[ConfusionCounts]:
        return self.image_only if name == "image_only" else self.fused

    def accuracy(self, name: str) -> float:
        return compute_metrics(overall(self.variant(name)), mode="overall").accuracy


def score_split(
    prepared: Sequence[PreparedScene],
    idx: Sequence[int],
    predictions: Sequence[np.ndarray] | None,
    thresholds: Sequence[float],
    prob_threshold: float,
) -> list[ThresholdCounts]:
    """Aggregate counts over the scenes in `idx`; `predictions[j]` labels the kept detections of scene idx[j]."""
    k = prepared[0].scene.taxonomy.K
    result = []
    for thr in thresholds:
        yolo = [ConfusionCounts() for _ in range(k)]
        vit = [ConfusionCounts() for _ in range(k)]
        for j, i in enumerate(idx):
            p = prepared[i]
            labels = {} if predictions is None else dict(zip(p.kept, (int(v) for v in predictions[j])))
            y, v = score_scene(p.detections, p.scene.objects, k, thr, labels, prob_threshold)
            yolo = [a + b for a, b in zip(yolo, y)]
            vit = [a + b for a, b in zip(vit, v)]
        result.append(ThresholdCounts(thr, yolo, vit))
    return result


@dataclass
class FoldResult:
    fold: int
    model: ViTModel
    report: TrainReport
    counts: list[ThresholdCounts]

    def accuracy(self, variant: str, iou: float) -> float:
        for c in self.counts:
            if c.iou == iou:
                return c.accuracy(variant)
        raise KeyError(iou)


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(fold), 0xB17]).generate_state(1)[0])


def run_fold(
    prepared: Sequence[PreparedScene],
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    cfg: RunConfig,
    fold: int,
) -> FoldResult:
    first = prepared[0].scene
    vit_cfg = dataclasses.replace(
        cfg.vit,
        num_classes=first.taxonomy.K,
        height=first.layer.height,
        width=first.layer.width,
        seed=fold_seed(cfg.seed, fold),
    )
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(fold), 0x401D]))
    shuffled = rng.permutation(train_idx)
    n_hold = int(round(len(shuffled) * cfg.holdout_fraction))
    fit_idx, hold_idx = np.sort(shuffled[n_hold:]), np.sort(shuffled[:n_hold])

    x_fit, y_fit = _stack(prepared, fit_idx)
    x_hold, y_hold = _stack(prepared, hold_idx)
    model = ViTModel(vit_cfg)
    model, report = train(model, x_fit, y_fit, x_hold, y_hold, vit_cfg)
    logger.info("fold %d: %d samples, stopped at epoch %d", fold, len(y_fit), report.stop_epoch)

    predictions = [model.predict(prepared[i].fused) if len(prepared[i].kept) else np.zeros(0) for i in val_idx]
    counts = score_split(prepared, val_idx, predictions, cfg.iou_thresholds, cfg.prob_threshold)
    return FoldResult(fold, model, report, counts)


@dataclass
class ExperimentResult:
    config: RunConfig
    folds: list[FoldResult]
    ttests: dict[float, TTestResult] = field(default_factory=dict)

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(self.config.iou_thresholds)

    def fold_accuracies(self, variant: str, iou: float) -> list[float]:
        return [f.accuracy(variant, iou) for f in self.folds]

    def mean_accuracy(self, variant: str, iou: float) -> float:
        return mean_std(self.fold_accuracies(variant, iou))[0]

    def curve(self) -> dict[str, list[float]]:
        return {v: [self.mean_accuracy(v, t) for t in self.thresholds] for v in VARIANTS}


def splits_for(n: int, cfg: RunConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    if cfg.folds >= 2:
        return zfold_split(n, cfg.folds, cfg.seed, cfg.val_fraction)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5F1D, 0]))
    perm = rng.permutation(n)
    n_val = min(max(1, int(round(n * cfg.val_fraction))), n - 1)
    return [(np.sort(perm[n_val:]), np.sort(perm[:n_val]))]


def run_experiment(scenes: Sequence[Scene], cfg: RunConfig) -> ExperimentResult:
    cfg.validate()
    if len(scenes) < 2:
        raise ValueError("need at least two scenes")
    prepared = prepare_scenes(scenes, cfg)
    folds = [run_fold(prepared, tr, va, cfg, z) for z, (tr, va) in enumerate(splits_for(len(prepared), cfg))]
    result = ExperimentResult(cfg, folds)
    if len(folds) >= 2:
        for thr in result.thresholds:
            a = result.fold_accuracies("fused", thr)
            b = result.fold_accuracies("image_only", thr)
            try:
                result.ttests[thr] = unpaired_ttest(a, b)
            except ValueError:
                logger.warning("t-test undefined at IoU %s (zero variance)", thr)
    return result


def sweep_iou(
    scenes: Sequence[Scene], cfg: RunConfig, thresholds: Sequence[float]
) -> tuple[ExperimentResult, dict[str, list[float]]]:
    """Fold-mean overall accuracy of each variant along an IoU grid."""
    if not thresholds or any(not 0.0 < t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must be non-empty and lie in (0, 1]")
    result = run_experiment(scenes, dataclasses.replace(cfg, iou_thresholds=tuple(thresholds)))
    return result, result.curve()
