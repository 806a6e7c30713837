import numpy as np
from skimage.measure import label, regionprops
from skimage.transform import resize
from geometry.geometry_error import EmptyMask, GeometryError, ShapeTooLarge

# measured diameter is re-fitted while it misses the target by more than this
MODULATION_TOLERANCE = 1.0
MAX_MODULATION_CORRECTIONS = 6


class DiameterSpec:
    def __init__(self, dInit, d):
        if dInit <= 0:
            raise EmptyMask(f"measured diameter must be positive, got {dInit}")
        if d <= 0:
            raise GeometryError(f"requested diameter must be positive, got {d}")
        self.dInit = dInit
        self.d = d
        self.f = d / dInit

    def getScaleFactor(self):
        return self.f


def toBinaryMask(array):
    return (np.asarray(array) > 0).astype(np.uint8)


def countForeground(mask):
    return int(np.count_nonzero(mask))


def boundingBox(mask):
    rows = np.flatnonzero(np.any(mask, axis=1))
    cols = np.flatnonzero(np.any(mask, axis=0))
    if not len(rows):
        raise EmptyMask("mask has no foreground pixel")
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def boxMask(mask):
    rowMin, colMin, rowMax, colMax = boundingBox(mask)
    filled = np.zeros_like(toBinaryMask(mask))
    filled[rowMin:rowMax, colMin:colMax] = 1
    return filled


def estimateDiameter(mask):
    """Mean of the equivalent-ellipse major and minor axis lengths.

    Axis lengths are 4 * sqrt(eigenvalue) of the population covariance of the
    foreground pixel coordinates.
    """
    binary = toBinaryMask(mask)
    if not countForeground(binary):
        raise EmptyMask("cannot measure the diameter of an empty mask")
    region = regionprops(binary)[0]
    return float((region.axis_major_length + region.axis_minor_length) / 2)


def roundHalfUp(value):
    return int(np.floor(value + 0.5))


def rescaleNearest(mask, shape):
    scaled = resize(
        mask.astype(np.float64),
        shape,
        order=0,
        mode="edge",
        preserve_range=True,
        anti_aliasing=False,
    )
    return (scaled > 0.5).astype(np.uint8)


def pasteCentered(shapeMask, canvas):
    height, width = shapeMask.shape
    if height > canvas or width > canvas:
        raise ShapeTooLarge(
            f"rescaled shape {height}x{width} does not fit a {canvas}x{canvas} canvas"
        )
    out = np.zeros((canvas, canvas), dtype=np.uint8)
    top = (canvas - height) // 2
    left = (canvas - width) // 2
    out[top : top + height, left : left + width] = shapeMask
    return out


def modulateSize(mask, targetD, canvas):
    """Rescale a shape mask so that its estimated diameter equals targetD.

    The tight bounding box of the foreground is rescaled with nearest-neighbor
    interpolation by f = targetD / d_init and pasted at the centre of a
    canvas x canvas grid.
    """
    binary = toBinaryMask(mask)
    spec = DiameterSpec(estimateDiameter(binary), targetD)
    rowMin, colMin, rowMax, colMax = boundingBox(binary)
    crop = binary[rowMin:rowMax, colMin:colMax]
    factor = spec.getScaleFactor()
    best = None
    for _ in range(MAX_MODULATION_CORRECTIONS):
        height = max(1, roundHalfUp(crop.shape[0] * factor))
        width = max(1, roundHalfUp(crop.shape[1] * factor))
        if height > canvas or width > canvas:
            if best is None:
                raise ShapeTooLarge(
                    f"diameter {targetD:.1f} needs a {height}x{width} box, canvas is {canvas}"
                )
            break
        scaled = rescaleNearest(crop, (height, width))
        measured = estimateDiameter(scaled)
        error = abs(measured - targetD)
        if best is None or error < best[0]:
            best = (error, scaled)
        if error <= MODULATION_TOLERANCE or measured <= 0:
            break
        factor *= targetD / measured
    return pasteCentered(best[1], canvas)


def upsampleNearest(mask, size):
    binary = toBinaryMask(mask)
    if size < max(binary.shape):
        raise GeometryError(f"cannot upsample a {binary.shape} mask to {size}")
    if binary.shape == (size, size):
        return binary.copy()
    return rescaleNearest(binary, (size, size))


def cleanMask(prob, threshold=0.5):
    if not 0 < threshold < 1:
        raise GeometryError(f"threshold must lie in (0, 1), got {threshold}")
    binary = np.asarray(prob) >= threshold
    labels, numLabels = label(binary, connectivity=2, return_num=True)
    if not numLabels:
        raise EmptyMask(f"no pixel reaches the threshold {threshold}")
    sizes = np.bincount(labels.ravel())[1:]
    # labels are numbered in raster order, argmax keeps the first of equal sizes
    largest = int(np.argmax(sizes)) + 1
    return (labels == largest).astype(np.uint8)


def rectanglePlacements(region, height, width):
    region = toBinaryMask(region)
    rows, cols = region.shape
    if height > rows or width > cols or height < 1 or width < 1:
        return np.zeros((0, 0), dtype=bool)
    integral = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    integral[1:, 1:] = region.cumsum(axis=0).cumsum(axis=1)
    inside = (
        integral[height:, width:]
        - integral[:-height, width:]
        - integral[height:, :-width]
        + integral[:-height, :-width]
    )
    return inside == height * width
