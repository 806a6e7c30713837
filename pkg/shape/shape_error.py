class ShapeError(Exception):
    def __init__(self, message):
        self.message = message


class BadLatentDim(ShapeError):
    pass
