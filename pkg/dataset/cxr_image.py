import numpy as np
from dataset.annotations import makeAnnotation
from dataset.dataset_error import DatasetError, OutOfBounds


class CxrImage:
    def __init__(self, pixels, imageId, lungMask=None, annotation=None, noduleMasks=None):
        self.pixels = np.asarray(pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise DatasetError(f"image {imageId} is not a 2D grayscale grid")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise DatasetError(f"image {imageId} intensities are outside [0, 1]")
        if lungMask is not None and np.shape(lungMask) != self.pixels.shape:
            raise DatasetError(f"lung mask of {imageId} does not match the image size")
        self.imageId = imageId
        self.lungMask = None if lungMask is None else (np.asarray(lungMask) > 0).astype(np.uint8)
        self.annotation = annotation if annotation is not None else makeAnnotation(imageId)
        self.noduleMasks = list(noduleMasks) if noduleMasks is not None else []

    def getShape(self):
        return self.pixels.shape

    def getImageId(self):
        return self.imageId

    def getLungMask(self):
        return self.lungMask

    def getAnnotation(self):
        return self.annotation

    def getNoduleMasks(self):
        return self.noduleMasks

    def withPixels(self, pixels, imageId=None, annotation=None, noduleMasks=None):
        return CxrImage(
            pixels,
            imageId if imageId is not None else self.imageId,
            self.lungMask,
            annotation if annotation is not None else self.annotation,
            noduleMasks if noduleMasks is not None else self.noduleMasks,
        )


def pixelsOf(image):
    return image.pixels if isinstance(image, CxrImage) else np.asarray(image)


def verifyWindow(shape, origin, size):
    row, col = origin
    if row < 0 or col < 0 or row + size > shape[0] or col + size > shape[1]:
        raise OutOfBounds(
            f"{size}x{size} window at {origin} does not fit a {shape[0]}x{shape[1]} image"
        )


def cropPatch(image, center, size=256):
    pixels = pixelsOf(image)
    origin = (int(center[0]) - size // 2, int(center[1]) - size // 2)
    verifyWindow(pixels.shape, origin, size)
    row, col = origin
    return pixels[row : row + size, col : col + size].copy(), origin


def pastePatch(image, patch, origin):
    pixels = pixelsOf(image)
    patch = np.asarray(patch)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise DatasetError(f"patch must be a square grid, got {patch.shape}")
    verifyWindow(pixels.shape, origin, patch.shape[0])
    row, col = origin
    out = pixels.copy()
    out[row : row + patch.shape[0], col : col + patch.shape[1]] = patch
    if isinstance(image, CxrImage):
        return image.withPixels(out)
    return out
