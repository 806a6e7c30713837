from detection.detection_error import InvalidBox


class Box:
    def __init__(self, xMin, yMin, xMax, yMax, score=None):
        if not (xMax > xMin and yMax > yMin):
            raise InvalidBox(f"box [{xMin}, {yMin}, {xMax}, {yMax}] has no area")
        if score is not None and not 0 <= score <= 1:
            raise InvalidBox(f"box score {score} is outside [0, 1]")
        self.xMin = float(xMin)
        self.yMin = float(yMin)
        self.xMax = float(xMax)
        self.yMax = float(yMax)
        self.score = None if score is None else float(score)

    @classmethod
    def fromList(cls, coordinates, score=None):
        return cls(*coordinates[:4], score=score)

    def getArea(self):
        return (self.xMax - self.xMin) * (self.yMax - self.yMin)

    def toList(self):
        return [self.xMin, self.yMin, self.xMax, self.yMax]

    def toDict(self):
        data = {"box": self.toList()}
        if self.score is not None:
            data["score"] = self.score
        return data

    def __repr__(self):
        scoreSpecifier = "" if self.score is None else f", score={self.score:.3f}"
        return f"Box({self.xMin:g}, {self.yMin:g}, {self.xMax:g}, {self.yMax:g}{scoreSpecifier})"


def iou(a, b):
    width = min(a.xMax, b.xMax) - max(a.xMin, b.xMin)
    height = min(a.yMax, b.yMax) - max(a.yMin, b.yMin)
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    return intersection / (a.getArea() + b.getArea() - intersection)


def boxesFromAnnotation(annotation):
    scores = annotation.get("scores")
    return [
        Box.fromList(coordinates, None if scores is None else scores[index])
        for index, coordinates in enumerate(annotation.get("boxes", []))
    ]
