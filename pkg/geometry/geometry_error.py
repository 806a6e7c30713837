class GeometryError(Exception):
    def __init__(self, message):
        self.message = message


class EmptyMask(GeometryError):
    pass


class ShapeTooLarge(GeometryError):
    pass
