import numpy as np
import pytest
from detection.box import Box, boxesFromAnnotation, iou
from detection.detection_error import InvalidBox, NoGroundTruth
from detection.froc import frocCurve, frocSummary, node21Score, sensitivityAt, thresholdAtFpRate
from detection.matching import DETECTED, MISSED, matchDetections


def box(x0, y0, x1, y1, score=None):
    return Box(x0, y0, x1, y1, score)


def stepRecords():
    # 5 images, 2 nodules: a 0.9 false positive then a 0.8 hit
    groundTruths = [[box(10, 10, 30, 30)], [box(50, 50, 70, 70)], [], [], []]
    predictions = [[box(10, 10, 30, 30, 0.8)], [], [box(100, 100, 120, 120, 0.9)], [], []]
    return [
        matchDetections(predictions[index], groundTruths[index], imageId=f"img_{index}")
        for index in range(5)
    ]


def test_iou_examples():
    a = box(0, 0, 10, 10)
    assert iou(a, box(0, 0, 10, 10)) == 1.0
    assert iou(a, box(20, 20, 30, 30)) == 0.0
    assert iou(a, box(10, 0, 20, 10)) == 0.0
    assert iou(a, box(5, 0, 15, 10)) == pytest.approx(1 / 3)


def test_iou_is_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(200):
        corners = rng.uniform(0, 100, size=(2, 2))
        a = box(*corners[0], *(corners[0] + rng.uniform(1, 40, size=2)))
        b = box(*corners[1], *(corners[1] + rng.uniform(1, 40, size=2)))
        assert iou(a, b) == iou(b, a)
        assert 0 <= iou(a, b) <= 1


def test_invalid_boxes():
    with pytest.raises(InvalidBox):
        box(10, 0, 10, 5)
    with pytest.raises(InvalidBox):
        box(0, 0, 5, 5, score=1.5)


def test_boxes_from_annotation():
    boxes = boxesFromAnnotation({"boxes": [[0, 0, 4, 4], [2, 2, 8, 9]], "scores": [0.3, 0.7]})
    assert [b.score for b in boxes] == [0.3, 0.7]
    assert boxes[1].toList() == [2.0, 2.0, 8.0, 9.0]
    assert boxesFromAnnotation({}) == []


def test_match_examples():
    groundTruth = [box(0, 0, 10, 10)]
    record = matchDetections([box(0, 0, 10, 10, 0.9)], groundTruth, confThreshold=0.5)
    assert record.statuses == [DETECTED] and record.falsePositives == 0
    record = matchDetections([], groundTruth)
    assert record.statuses == [MISSED] and record.missedIndices() == [0]
    record = matchDetections([box(0, 0, 10, 10, 0.9), box(1, 1, 11, 11, 0.8)], groundTruth)
    assert record.numDetected() == 1 and record.falsePositives == 1
    record = matchDetections([box(0, 0, 10, 10, 0.4)], groundTruth, confThreshold=0.5)
    assert record.statuses == [MISSED] and record.falsePositives == 0
    assert matchDetections([], []).toDict()["statuses"] == []


def test_higher_scores_match_first():
    groundTruths = [box(0, 0, 10, 10), box(8, 0, 18, 10)]
    record = matchDetections([box(0, 0, 10, 10, 0.6), box(2, 0, 12, 10, 0.9)], groundTruths)
    # the 0.9 prediction claims the first nodule, the 0.6 one has no unmatched partner left
    assert record.numDetected() == 1
    assert record.falsePositives == 1


def test_lower_threshold_is_monotone():
    rng = np.random.default_rng(3)
    groundTruths = [box(x, x, x + 12, x + 12) for x in (10, 40, 70)]
    predictions = []
    for _ in range(15):
        x, y = rng.uniform(0, 80, size=2)
        predictions.append(box(x, y, x + 12, y + 12, rng.uniform(0.01, 1)))
    previous = None
    for threshold in np.linspace(1.0, 0.0, 21):
        record = matchDetections(predictions, groundTruths, confThreshold=threshold)
        current = (record.numDetected(), record.falsePositives)
        if previous is not None:
            assert current[0] >= previous[0] and current[1] >= previous[1]
        previous = current


def test_perfect_detector():
    records = [
        matchDetections([box(10, 10, 30, 30, 0.95)], [box(10, 10, 30, 30)], imageId=str(index))
        for index in range(4)
    ]
    summary = frocSummary(records)
    assert summary.auc == 1.0
    assert summary.senAt025 == 1.0
    assert summary.node21Score == 1.0


def test_step_curve():
    fps, sensitivities, thresholds = frocCurve(stepRecords())
    assert fps == [0.0, 0.2, 0.2]
    assert sensitivities == [0.0, 0.0, 0.5]
    assert thresholds == [None, 0.9, 0.8]
    summary = frocSummary(stepRecords())
    assert summary.auc == pytest.approx(0.4, abs=1e-9)
    assert summary.senAt025 == pytest.approx(0.5, abs=1e-9)
    assert summary.node21Score == pytest.approx(0.75 * 0.4 + 0.25 * 0.5, abs=1e-9)
    assert dict(summary.grid)[0.125] == 0.0
    assert dict(summary.grid)[8.0] == 0.5


def test_wider_fp_range_keeps_the_plateau():
    summary = frocSummary(stepRecords(), fpMax=2.0)
    assert summary.auc == pytest.approx((2.0 - 0.2) * 0.5 / 2.0, abs=1e-9)


def test_duplicated_records_give_the_same_summary():
    once = frocSummary(stepRecords())
    twice = frocSummary(stepRecords() + stepRecords())
    assert twice.auc == pytest.approx(once.auc, abs=1e-12)
    assert twice.senAt025 == pytest.approx(once.senAt025, abs=1e-12)


def test_sensitivity_interpolation():
    fps = np.array([0.0, 0.1, 0.5])
    sensitivities = np.array([0.0, 0.4, 0.8])
    assert sensitivityAt(fps, sensitivities, 0.3) == pytest.approx(0.6)
    assert sensitivityAt(fps, sensitivities, 3.0) == 0.8


def test_node21_score_identity():
    summary = frocSummary(stepRecords())
    assert summary.node21Score == 0.75 * summary.auc + 0.25 * summary.senAt025
    sensitivity = (0.8673 - 0.75 * 0.9090) / 0.25
    assert sensitivity == pytest.approx(0.7422, abs=1e-9)
    assert node21Score(0.9090, sensitivity) == pytest.approx(0.8673, abs=1e-12)


def test_no_ground_truth():
    with pytest.raises(NoGroundTruth):
        frocSummary([])
    with pytest.raises(NoGroundTruth):
        frocSummary([matchDetections([box(0, 0, 5, 5, 0.9)], [])])


def test_threshold_at_fp_rate():
    assert thresholdAtFpRate(stepRecords(), 0.25) == 0.8
    above = thresholdAtFpRate(stepRecords(), 0.1)
    assert above > 0.9
    for record in stepRecords():
        assert matchDetections(record.predictions, record.groundTruths, confThreshold=above).falsePositives == 0


def test_summary_serializes():
    data = frocSummary(stepRecords()).toDict()
    assert data["fps_per_image"] == [0.0, 0.2, 0.2]
    assert set(data) >= {"auc", "sen_at_0_25", "node21_score", "grid", "thresholds"}
