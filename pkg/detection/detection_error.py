class DetectionError(Exception):
    def __init__(self, message):
        self.message = message


class NotFitted(DetectionError):
    pass


class NoGroundTruth(DetectionError):
    pass


class InvalidBox(DetectionError):
    pass
