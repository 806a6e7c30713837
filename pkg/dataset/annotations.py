# per-image annotation JSON keys
IMAGE_ID = "image_id"
BOXES = "boxes"
SCORES = "scores"
CONTOURS = "contours"
DIAMETERS = "diameters"

# boxes are [x_min, y_min, x_max, y_max] in pixel edges, max exclusive


def makeAnnotation(imageId, boxes=None, contours=None, diameters=None):
    annotation = {IMAGE_ID: imageId, BOXES: [list(map(float, box)) for box in boxes or []]}
    if contours is not None:
        annotation[CONTOURS] = [[list(map(float, point)) for point in contour] for contour in contours]
    if diameters is not None:
        annotation[DIAMETERS] = [float(diameter) for diameter in diameters]
    return annotation


def boxFromMaskBounds(bounds, origin=(0, 0)):
    rowMin, colMin, rowMax, colMax = bounds
    originRow, originCol = origin
    return [
        float(colMin + originCol),
        float(rowMin + originRow),
        float(colMax + originCol),
        float(rowMax + originRow),
    ]
