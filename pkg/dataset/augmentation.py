import numpy as np
from dataset.annotations import BOXES, CONTOURS, DIAMETERS, SCORES, IMAGE_ID
from dataset.cxr_image import CxrImage

# a shifted box survives when at least this share of its area stays in frame
MIN_VISIBLE_AREA = 0.5
PER_BOX_KEYS = (BOXES, CONTOURS, DIAMETERS, SCORES)


def flipArray(array):
    return None if array is None else np.ascontiguousarray(array[:, ::-1])


def shiftArray(array, dy, dx, fill=0):
    if array is None:
        return None
    height, width = array.shape
    out = np.full_like(array, fill)
    if abs(dy) >= height or abs(dx) >= width:
        return out
    out[max(dy, 0) : height + min(dy, 0), max(dx, 0) : width + min(dx, 0)] = array[
        max(-dy, 0) : height - max(dy, 0), max(-dx, 0) : width - max(dx, 0)
    ]
    return out


def boxArea(box):
    return max(0.0, box[2] - box[0]) * max(0.0, box[3] - box[1])


def flipAnnotation(annotation, width):
    flipped = dict(annotation)
    flipped[BOXES] = [[width - x1, y0, width - x0, y1] for x0, y0, x1, y1 in annotation.get(BOXES, [])]
    if CONTOURS in annotation:
        flipped[CONTOURS] = [
            [[width - 1 - x, y] for x, y in contour] for contour in annotation[CONTOURS]
        ]
    return flipped


def shiftAnnotation(annotation, dy, dx, shape):
    height, width = shape
    kept = []
    boxes = []
    for index, (x0, y0, x1, y1) in enumerate(annotation.get(BOXES, [])):
        moved = [x0 + dx, y0 + dy, x1 + dx, y1 + dy]
        clipped = [
            min(max(moved[0], 0), width),
            min(max(moved[1], 0), height),
            min(max(moved[2], 0), width),
            min(max(moved[3], 0), height),
        ]
        if boxArea(clipped) < MIN_VISIBLE_AREA * boxArea(moved):
            continue
        kept.append(index)
        boxes.append(clipped)
    shifted = {IMAGE_ID: annotation.get(IMAGE_ID)}
    for key, value in annotation.items():
        if key not in PER_BOX_KEYS:
            shifted[key] = value
    shifted[BOXES] = boxes
    if CONTOURS in annotation:
        shifted[CONTOURS] = [
            [[x + dx, y + dy] for x, y in annotation[CONTOURS][index]] for index in kept
        ]
    for key in (DIAMETERS, SCORES):
        if key in annotation:
            shifted[key] = [annotation[key][index] for index in kept]
    return shifted, kept


def traditionalAugment(
    image,
    annotation,
    rng,
    shiftRange=32,
    flipProbability=0.5,
    shiftProbability=0.5,
):
    pixels = image.pixels
    lungMask = image.getLungMask()
    noduleMasks = list(image.getNoduleMasks())
    height, width = pixels.shape
    if rng.random() < flipProbability:
        pixels = flipArray(pixels)
        lungMask = flipArray(lungMask)
        noduleMasks = [flipArray(mask) for mask in noduleMasks]
        annotation = flipAnnotation(annotation, width)
    if rng.random() < shiftProbability and shiftRange > 0:
        dy, dx = (int(value) for value in rng.integers(-shiftRange, shiftRange + 1, size=2))
        pixels = shiftArray(pixels, dy, dx, fill=0.0)
        lungMask = shiftArray(lungMask, dy, dx)
        annotation, kept = shiftAnnotation(annotation, dy, dx, (height, width))
        noduleMasks = [shiftArray(noduleMasks[index], dy, dx) for index in kept if index < len(noduleMasks)]
    augmented = CxrImage(pixels, image.getImageId(), lungMask, annotation, noduleMasks)
    return augmented, annotation
