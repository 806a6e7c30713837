class GanError(Exception):
    def __init__(self, message):
        self.message = message


class EmptyBatch(GanError):
    pass
