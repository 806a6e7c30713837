class TextureError(Exception):
    def __init__(self, message):
        self.message = message


class ChannelMismatch(TextureError):
    pass


class SizeMismatch(TextureError):
    pass
