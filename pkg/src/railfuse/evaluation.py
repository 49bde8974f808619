"""
One-against-all, two-stage confusion accounting.

Detector-level states come from matching detections to ground truth for one
target class at a time; the classifier's decision on each detected box then
moves every state through a fixed transition table.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from railfuse.scene import BoundingBox, Detection, GroundTruth, iou

DEFAULT_PROB_THRESHOLD = 0.25


class State(str, Enum):
    TP = "TP"
    FP = "FP"
    FN = "FN"
    TN = "TN"


@dataclass(frozen=True)
class YoloState:
    state: State
    detection: int | None = None  # index into the caller's detection list

    @property
    def has_box(self) -> bool:
        return self.detection is not None


_TRANSITIONS = {
    (State.TP, True): State.TP,
    (State.FN, True): State.TP,
    (State.FP, True): State.FP,
    (State.TN, True): State.FP,
    (State.TP, False): State.FN,
    (State.FN, False): State.FN,
    (State.FP, False): State.TN,
    (State.TN, False): State.TN,
}


def vit_transition(state: YoloState | State, vit_positive: bool | None) -> State:
    """Classifier-level state for a detector-level state.

    A boxless state (undetected object, or a scene with nothing to examine)
    cannot be re-examined and keeps its detector-level label.
    """
    if isinstance(state, YoloState):
        if not state.has_box or vit_positive is None:
            return state.state
        state = state.state
    if vit_positive is None:
        return State(state)
    return _TRANSITIONS[(State(state), bool(vit_positive))]


def greedy_match(det_boxes: Sequence[BoundingBox], gt_boxes: Sequence[BoundingBox]) -> list[tuple[int, int, float]]:
    """One-to-one pairs (det, gt, iou) taken greedily by descending IoU; only overlapping pairs."""
    pairs = []
    for d, db in enumerate(det_boxes):
        for g, gb in enumerate(gt_boxes):
            v = iou(db, gb)
            if v > 0.0:
                pairs.append((-v, d, g))
    pairs.sort()
    used_d: set[int] = set()
    used_g: set[int] = set()
    out = []
    for neg, d, g in pairs:
        if d in used_d or g in used_g:
            continue
        used_d.add(d)
        used_g.add(g)
        out.append((d, g, -neg))
    return out


def classify_yolo_outcomes(
    detections: Sequence[Detection],
    gt: Sequence[GroundTruth],
    target: int,
    iou_threshold: float,
    prob_threshold: float = DEFAULT_PROB_THRESHOLD,
) -> list[YoloState]:
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    kept = [i for i, d in enumerate(detections) if d.confidence >= prob_threshold]
    matches = greedy_match([detections[i].box for i in kept], [g.box for g in gt])

    states: list[YoloState] = []
    matched_det: set[int] = set()
    matched_gt: set[int] = set()
    for kd, g, v in matches:
        di = kept[kd]
        matched_det.add(di)
        matched_gt.add(g)
        pred_t = detections[di].label == target
        gt_t = gt[g].label == target
        if pred_t and gt_t:
            if v >= iou_threshold:
                states.append(YoloState(State.TP, di))
            else:
                states.append(YoloState(State.FP, di))
                states.append(YoloState(State.FN, di))
        elif pred_t:
            states.append(YoloState(State.FP, di))
        elif gt_t:
            states.append(YoloState(State.FN, di))
        else:
            states.append(YoloState(State.TN, di))
    for di in kept:
        if di in matched_det:
            continue
        states.append(YoloState(State.FP if detections[di].label == target else State.TN, di))
    for g, obj in enumerate(gt):
        if g not in matched_gt and obj.label == target:
            states.append(YoloState(State.FN, None))

    any_target_gt = any(o.label == target for o in gt)
    any_target_pred = any(detections[i].label == target for i in kept)
    if not any_target_gt and not any_target_pred:
        states.append(YoloState(State.TN, None))
    return states


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_states(cls, states: Iterable[State]) -> "ConfusionCounts":
        c = {s: 0 for s in State}
        for s in states:
            c[State(s)] += 1
        return cls(c[State.TP], c[State.FP], c[State.FN], c[State.TN])

    def as_dict(self) -> dict[str, int]:
        return {"TP": self.tp, "FP": self.fp, "FN": self.fn, "TN": self.tn}


@dataclass(frozen=True)
class MetricSet:
    precision: float
    recall: float
    f1: float
    accuracy: float
    tnr: float
    degenerate: bool = False

    def as_dict(self) -> dict[str, float]:
        return {"P": self.precision, "R": self.recall, "F1": self.f1, "ACC": self.accuracy, "TNR": self.tnr}


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def compute_metrics(counts: ConfusionCounts, mode: str = "per_class") -> MetricSet:
    """Precision, recall, F1, accuracy and TNR.

    ``per_class`` accuracy is (TP+TN)/total; ``overall`` accuracy leaves TN
    out, TP/(TP+FP+FN). Zero denominators give 0 and set ``degenerate``.
    """
    c = counts
    p, d1 = _ratio(c.tp, c.tp + c.fp)
    r, d2 = _ratio(c.tp, c.tp + c.fn)
    f1, d3 = _ratio(2 * p * r, p + r)
    tnr, d4 = _ratio(c.tn, c.tn + c.fp)
    if mode == "per_class":
        acc, d5 = _ratio(c.tp + c.tn, c.total)
    elif mode == "overall":
        acc, d5 = _ratio(c.tp, c.tp + c.fp + c.fn)
    else:
        raise ValueError(f"unknown metric mode {mode!r}")
    return MetricSet(p, r, f1, acc, tnr, degenerate=any((d1, d2, d3, d4, d5)))


def score_scene(
    detections: Sequence[Detection],
    gt: Sequence[GroundTruth],
    k: int,
    iou_threshold: float,
    vit_labels: Mapping[int, int] | None = None,
    prob_threshold: float = DEFAULT_PROB_THRESHOLD,
) -> tuple[list[ConfusionCounts], list[ConfusionCounts]]:
    """Per-class counts for one scene at detector level and after the classifier.

    `vit_labels` maps detection index to the classifier's predicted class.
    """
    yolo, vit = [], []
    vit_labels = vit_labels or {}
    for target in range(k):
        states = classify_yolo_outcomes(detections, gt, target, iou_threshold, prob_threshold)
        yolo.append(ConfusionCounts.from_states(s.state for s in states))
        after = []
        for s in states:
            label = vit_labels.get(s.detection) if s.has_box else None
            after.append(vit_transition(s, None if label is None else label == target))
        vit.append(ConfusionCounts.from_states(after))
    return yolo, vit


def overall(per_class: Sequence[ConfusionCounts]) -> ConfusionCounts:
    total = ConfusionCounts()
    for c in per_class:
        total = total + c
    return total
