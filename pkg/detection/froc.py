import numpy as np
from scipy.integrate import trapezoid
from detection.detection_error import NoGroundTruth
from detection.matching import countMatches

OPERATING_POINT = 0.25
AUC_WEIGHT = 0.75
DEFAULT_FP_GRID = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def node21Score(auc, sensitivityAtOperatingPoint):
    return AUC_WEIGHT * auc + (1 - AUC_WEIGHT) * sensitivityAtOperatingPoint


class FrocSummary:
    def __init__(self, fps, sensitivities, thresholds, fpMax, fpGrid=DEFAULT_FP_GRID):
        self.fps = np.asarray(fps, dtype=np.float64)
        self.sensitivities = np.asarray(sensitivities, dtype=np.float64)
        self.thresholds = list(thresholds)
        self.fpMax = fpMax
        self.auc = curveAuc(self.fps, self.sensitivities, fpMax)
        self.senAt025 = sensitivityAt(self.fps, self.sensitivities, OPERATING_POINT)
        self.node21Score = node21Score(self.auc, self.senAt025)
        self.grid = [(fp, sensitivityAt(self.fps, self.sensitivities, fp)) for fp in fpGrid]

    def toDict(self):
        return {
            "fps_per_image": self.fps.tolist(),
            "sensitivity": self.sensitivities.tolist(),
            "thresholds": self.thresholds,
            "fp_max": self.fpMax,
            "auc": self.auc,
            "sen_at_0_25": self.senAt025,
            "node21_score": self.node21Score,
            "grid": [{"fps_per_image": fp, "sensitivity": sensitivity} for fp, sensitivity in self.grid],
        }


def sensitivityAt(fps, sensitivities, fpRate):
    """Sensitivity at fpRate FPs/image: linear between the last curve point at
    or below fpRate and the next one, constant past the curve's end."""
    index = int(np.searchsorted(fps, fpRate, side="right")) - 1
    if index < 0:
        return 0.0
    if index == len(fps) - 1:
        return float(sensitivities[index])
    fp0, fp1 = fps[index], fps[index + 1]
    sen0, sen1 = sensitivities[index], sensitivities[index + 1]
    return float(sen0 + (sen1 - sen0) * (fpRate - fp0) / (fp1 - fp0))


def curveAuc(fps, sensitivities, fpMax):
    """Trapezoid area under the curve on [0, fpMax], divided by fpMax."""
    inside = fps <= fpMax
    x = list(fps[inside])
    y = list(sensitivities[inside])
    if x[-1] < fpMax:
        x.append(fpMax)
        y.append(sensitivityAt(fps, sensitivities, fpMax))
    return float(trapezoid(y, x) / fpMax)


def sweepThresholds(records):
    scores = {box.score for record in records for box in record.predictions}
    return sorted(scores, reverse=True)


def operatingPoint(records, iouThreshold, threshold):
    detected = 0
    falsePositives = 0
    for record in records:
        matched, recordFalsePositives = countMatches(
            record.predictions, record.groundTruths, iouThreshold, threshold
        )
        detected += sum(matched)
        falsePositives += recordFalsePositives
    return detected, falsePositives


def frocCurve(records, iouThreshold=0.2):
    records = list(records)
    numGroundTruths = sum(len(record.groundTruths) for record in records)
    if not records or not numGroundTruths:
        raise NoGroundTruth("FROC analysis needs at least one ground-truth nodule")
    fps = [0.0]
    sensitivities = [0.0]
    thresholds = [None]
    for threshold in sweepThresholds(records):
        detected, falsePositives = operatingPoint(records, iouThreshold, threshold)
        fps.append(falsePositives / len(records))
        sensitivities.append(detected / numGroundTruths)
        thresholds.append(threshold)
    return fps, sensitivities, thresholds


def frocSummary(records, fpMax=1.0, iouThreshold=0.2, fpGrid=DEFAULT_FP_GRID):
    fps, sensitivities, thresholds = frocCurve(records, iouThreshold)
    return FrocSummary(fps, sensitivities, thresholds, fpMax, fpGrid)


def thresholdAtFpRate(records, fpRate, iouThreshold=0.2):
    """Lowest prediction score whose operating point stays within fpRate
    FPs/image; above every score when even the top one exceeds it."""
    records = list(records)
    chosen = None
    for threshold in sweepThresholds(records):
        _, falsePositives = operatingPoint(records, iouThreshold, threshold)
        if falsePositives / max(len(records), 1) > fpRate:
            break
        chosen = threshold
    if chosen is None:
        topScore = max((box.score for record in records for box in record.predictions), default=1.0)
        return float(np.nextafter(topScore, np.inf))
    return chosen
