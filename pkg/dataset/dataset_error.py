class DatasetError(Exception):
    def __init__(self, message):
        self.message = message


class EmptyDataset(DatasetError):
    pass


class OutOfBounds(DatasetError):
    pass


class ManifestError(DatasetError):
    pass
