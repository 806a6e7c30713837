class HemError(Exception):
    def __init__(self, message):
        self.message = message


class NoMissedNodules(HemError):
    pass


class EmptyDistribution(HemError):
    pass


class NoValidCropLocation(HemError):
    pass
