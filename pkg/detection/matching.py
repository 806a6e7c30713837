from detection.box import iou

DETECTED = "detected"
MISSED = "missed"


class DetectionRecord:
    def __init__(self, imageId, predictions, groundTruths, statuses, falsePositives, iouThreshold, confThreshold):
        self.imageId = imageId
        self.predictions = predictions
        self.groundTruths = groundTruths
        self.statuses = statuses
        self.falsePositives = falsePositives
        self.iouThreshold = iouThreshold
        self.confThreshold = confThreshold

    def numDetected(self):
        return self.statuses.count(DETECTED)

    def missedIndices(self):
        return [index for index, status in enumerate(self.statuses) if status == MISSED]

    def toDict(self):
        return {
            "image_id": self.imageId,
            "predictions": [box.toDict() for box in self.predictions],
            "ground_truths": [box.toList() for box in self.groundTruths],
            "statuses": list(self.statuses),
            "false_positives": self.falsePositives,
        }


def countMatches(predictions, groundTruths, iouThreshold, confThreshold):
    """Greedy matching by descending score; returns (matched GT flags, FP count)."""
    qualifying = sorted(
        (box for box in predictions if box.score >= confThreshold),
        key=lambda box: box.score,
        reverse=True,
    )
    matched = [False] * len(groundTruths)
    falsePositives = 0
    for prediction in qualifying:
        bestIndex = None
        bestOverlap = iouThreshold
        for index, groundTruth in enumerate(groundTruths):
            if matched[index]:
                continue
            overlap = iou(prediction, groundTruth)
            if overlap >= bestOverlap and (bestIndex is None or overlap > bestOverlap):
                bestIndex = index
                bestOverlap = overlap
        if bestIndex is None:
            falsePositives += 1
        else:
            matched[bestIndex] = True
    return matched, falsePositives


def matchDetections(predictions, groundTruths, iouThreshold=0.2, confThreshold=0.5, imageId=None):
    matched, falsePositives = countMatches(predictions, groundTruths, iouThreshold, confThreshold)
    statuses = [DETECTED if hit else MISSED for hit in matched]
    return DetectionRecord(
        imageId,
        list(predictions),
        list(groundTruths),
        statuses,
        falsePositives,
        iouThreshold,
        confThreshold,
    )
