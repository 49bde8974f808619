import numpy as np
import pytest

from railfuse.evaluation import (
    ConfusionCounts,
    State,
    YoloState,
    classify_yolo_outcomes,
    compute_metrics,
    greedy_match,
    overall,
    score_scene,
    vit_transition,
)
from railfuse.fixtures import KNOWN_DISCREPANCIES, metric_checks
from railfuse.scene import BoundingBox, Detection, GroundTruth, iou

RUPTURE, SURFACE, NOTHING = 0, 1, 2
B1 = BoundingBox(0, 0, 100, 100)
B2 = BoundingBox(200, 200, 300, 300)


def det(box, label, conf=0.9):
    return Detection(box, label, conf)


def states(seq):
    return sorted(s.state.value for s in seq)


# -- state machine ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "before, positive, after",
    [
        # detector right, classifier confirms / overturns
        (State.TP, True, State.TP),
        (State.TP, False, State.FN),
        # detector missed the class, classifier recovers it / agrees
        (State.FN, True, State.TP),
        (State.FN, False, State.FN),
        # detector false alarm, classifier keeps it / removes it
        (State.FP, True, State.FP),
        (State.FP, False, State.TN),
        # detector correctly negative, classifier invents / agrees
        (State.TN, True, State.FP),
        (State.TN, False, State.TN),
    ],
)
def test_transition_table(before, positive, after):
    assert vit_transition(YoloState(before, detection=0), positive) == after
    assert vit_transition(before, positive) == after


@pytest.mark.parametrize("s", list(State))
def test_boxless_states_pass_through(s):
    assert vit_transition(YoloState(s, None), True) == s
    assert vit_transition(YoloState(s, None), False) == s


def test_transitions_conserve_counts():
    rng = np.random.default_rng(0)
    all_states = list(State)
    for _ in range(10_000):
        n = int(rng.integers(1, 12))
        seq = [YoloState(all_states[i], int(j) if b else None) for i, j, b in zip(rng.integers(0, 4, n), rng.integers(0, 5, n), rng.random(n) < 0.8)]
        after = [vit_transition(s, bool(p)) for s, p in zip(seq, rng.random(n) < 0.5)]
        before = ConfusionCounts.from_states(s.state for s in seq)
        assert ConfusionCounts.from_states(after).total == before.total == n


# -- detector-level outcomes ---------------------------------------------------------------


def test_exact_correct_detection_is_tp():
    out = classify_yolo_outcomes([det(B1, RUPTURE)], [GroundTruth(B1, RUPTURE)], RUPTURE, 0.5)
    assert states(out) == ["TP"]


def test_poorly_localised_detection_is_fp_and_fn():
    shifted = BoundingBox(0, 0, 100, 40)  # IoU 0.4
    assert iou(shifted, B1) == pytest.approx(0.4)
    out = classify_yolo_outcomes([det(shifted, RUPTURE)], [GroundTruth(B1, RUPTURE)], RUPTURE, 0.7)
    assert states(out) == ["FN", "FP"]
    assert all(s.has_box for s in out)


def test_empty_scene_is_one_tn():
    out = classify_yolo_outcomes([], [], RUPTURE, 0.5)
    assert [s.state for s in out] == [State.TN] and not out[0].has_box


def test_misclassified_detection():
    gt = [GroundTruth(B1, RUPTURE)]
    d = [det(B1, NOTHING)]
    assert states(classify_yolo_outcomes(d, gt, RUPTURE, 0.5)) == ["FN"]
    assert states(classify_yolo_outcomes(d, gt, NOTHING, 0.5)) == ["FP"]
    assert states(classify_yolo_outcomes(d, gt, SURFACE, 0.5)) == ["TN", "TN"]


def test_unmatched_detections_and_missed_gt():
    gt = [GroundTruth(B1, RUPTURE)]
    d = [det(B2, RUPTURE), det(BoundingBox(400, 400, 450, 450), SURFACE)]
    out = classify_yolo_outcomes(d, gt, RUPTURE, 0.5)
    assert states(out) == ["FN", "FP", "TN"]
    fn = [s for s in out if s.state == State.FN]
    assert not fn[0].has_box


def test_low_confidence_detections_are_dropped():
    gt = [GroundTruth(B1, RUPTURE)]
    out = classify_yolo_outcomes([det(B1, RUPTURE, conf=0.2)], gt, RUPTURE, 0.5)
    assert states(out) == ["FN"]
    out = classify_yolo_outcomes([det(B1, RUPTURE, conf=0.25)], gt, RUPTURE, 0.5)
    assert states(out) == ["TP"]


def test_iou_threshold_validation():
    with pytest.raises(ValueError):
        classify_yolo_outcomes([], [], 0, 0.0)


def test_greedy_matching_is_one_to_one_by_descending_iou():
    gts = [BoundingBox(0, 0, 10, 10), BoundingBox(8, 0, 18, 10)]
    dets = [BoundingBox(1, 0, 11, 10), BoundingBox(0, 0, 10, 10)]
    pairs = greedy_match(dets, gts)
    # det 1 is exact on gt 0 and wins it; det 0 falls back to gt 1
    assert [(d, g) for d, g, _ in pairs] == [(1, 0), (0, 1)]
    assert len({d for d, _, _ in pairs}) == len(pairs) == len({g for _, g, _ in pairs})


def test_greedy_matching_ignores_disjoint_pairs():
    assert greedy_match([B1], [B2]) == []


# -- metrics ------------------------------------------------------------------------------------


def test_metrics_overall_fixture():
    m = compute_metrics(ConfusionCounts(1501, 616, 212, 86), "overall")
    assert m.precision == pytest.approx(0.7090, abs=1e-4)
    assert m.recall == pytest.approx(0.8762, abs=1e-4)
    assert m.accuracy == pytest.approx(0.6445, abs=1e-4)


def test_metrics_per_class_fixture():
    m = compute_metrics(ConfusionCounts(684, 113, 133, 31), "per_class")
    expected = (0.8582, 0.8372, 0.8476, 0.7440, 0.2153)
    assert (m.precision, m.recall, m.f1, m.accuracy, m.tnr) == pytest.approx(expected, abs=1e-4)


def test_metrics_perfect():
    m = compute_metrics(ConfusionCounts(1, 0, 0, 1))
    assert (m.precision, m.recall, m.f1, m.accuracy, m.tnr) == (1, 1, 1, 1, 1)
    assert not m.degenerate


def test_metrics_degenerate_flag():
    m = compute_metrics(ConfusionCounts(0, 0, 3, 0))
    assert m.precision == 0.0 and m.tnr == 0.0 and m.degenerate
    with pytest.raises(ValueError):
        compute_metrics(ConfusionCounts(), "macro")


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


def test_all_reference_metric_cells():
    checks = metric_checks()
    flagged = [c for c in checks if not c.ok]
    assert [c.key for c in flagged] == sorted(KNOWN_DISCREPANCIES)
    assert all(c.known_discrepancy for c in flagged)
    assert flagged[0].computed == pytest.approx(0.7592, abs=1e-4)


# -- scene scoring ------------------------------------------------------------------------------


def test_score_scene_classifier_fixes_misclassification():
    gt = [GroundTruth(B1, RUPTURE)]
    d = [det(B1, NOTHING)]
    yolo, vit = score_scene(d, gt, 3, 0.5, vit_labels={0: RUPTURE})
    assert yolo[RUPTURE] == ConfusionCounts(fn=1) and vit[RUPTURE] == ConfusionCounts(tp=1)
    assert yolo[NOTHING] == ConfusionCounts(fp=1) and vit[NOTHING] == ConfusionCounts(tn=1)
    assert overall(vit).tp == 1


def test_score_scene_without_labels_keeps_detector_states():
    gt = [GroundTruth(B1, RUPTURE), GroundTruth(B2, SURFACE)]
    d = [det(B1, RUPTURE), det(B2, NOTHING)]
    yolo, vit = score_scene(d, gt, 3, 0.5)
    assert yolo == vit


def test_score_scene_conserves_totals_with_random_labels():
    rng = np.random.default_rng(1)
    for _ in range(200):
        gt = [GroundTruth(BoundingBox(x, 0, x + 50, 50), int(rng.integers(3))) for x in range(0, 300, 100) if rng.random() < 0.7]
        d = [det(BoundingBox(x + rng.normal(0, 8), 0, x + 50, 50), int(rng.integers(3)), float(rng.random())) for x in range(0, 300, 100) if rng.random() < 0.8]
        labels = {i: int(rng.integers(3)) for i in range(len(d))}
        for thr in (0.3, 0.5, 0.7):
            yolo, vit = score_scene(d, gt, 3, thr, labels)
            assert [c.total for c in yolo] == [c.total for c in vit]


def test_overall_is_sum():
    parts = [ConfusionCounts(1, 2, 3, 4), ConfusionCounts(5, 6, 7, 8)]
    assert overall(parts) == ConfusionCounts(6, 8, 10, 12)

