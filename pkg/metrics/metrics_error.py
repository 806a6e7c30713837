class MetricsError(Exception):
    def __init__(self, message):
        self.message = message


class DimensionMismatch(MetricsError):
    pass


class SizeMismatch(MetricsError):
    pass


class TooFewSamples(MetricsError):
    pass
