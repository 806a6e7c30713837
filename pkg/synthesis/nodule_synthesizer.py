import numpy as np
from dataset.annotations import boxFromMaskBounds, makeAnnotation
from dataset.cxr_image import CxrImage, cropPatch, pastePatch
from geometry.mask_geometry import (
    boundingBox,
    cleanMask,
    estimateDiameter,
    modulateSize,
    rectanglePlacements,
    upsampleNearest,
)
from hem.hem_error import NoValidCropLocation
from shape.shape_gan import generateShape
from texture.texture_gan import composite, synthesizeTexture
from util.intensity import fromModelRange


class NoduleSynthesizer:
    def __init__(self, shapeGenerator, textureGenerator, patchSize=256, compositeOutput=True, threshold=0.5):
        self.shapeGenerator = shapeGenerator
        self.textureGenerator = textureGenerator
        self.patchSize = patchSize
        self.compositeOutput = compositeOutput
        self.threshold = threshold

    def getLatentDim(self):
        return self.shapeGenerator.latentDim

    def shapeMask(self, z, diameter):
        prob = generateShape(self.shapeGenerator, z)
        mask = upsampleNearest(cleanMask(prob, self.threshold), self.patchSize)
        return modulateSize(mask, diameter, self.patchSize)

    def synthesizePatch(self, original, shapeMask):
        _, refinedOut = synthesizeTexture(self.textureGenerator, original, shapeMask)
        synthesized = fromModelRange(refinedOut)
        if self.compositeOutput:
            synthesized = composite(np.asarray(original, dtype=np.float64), shapeMask, synthesized)
        return synthesized

    def cropOrigin(self, lungMask, shapeMask, imageShape, rng):
        # the shape bounding box must land inside the lung field
        rowMin, colMin, rowMax, colMax = boundingBox(shapeMask)
        placements = rectanglePlacements(lungMask, rowMax - rowMin, colMax - colMin)
        if not placements.size:
            raise NoValidCropLocation("lung field is smaller than the nodule")
        # placements index the top-left of the bbox; shift to patch origins
        height, width = imageShape
        valid = np.zeros_like(placements)
        rowLow, colLow = rowMin, colMin
        rowHigh = min(placements.shape[0], height - self.patchSize + rowMin + 1)
        colHigh = min(placements.shape[1], width - self.patchSize + colMin + 1)
        if rowHigh > rowLow and colHigh > colLow:
            valid[rowLow:rowHigh, colLow:colHigh] = placements[rowLow:rowHigh, colLow:colHigh]
        candidates = np.flatnonzero(valid)
        if not len(candidates):
            raise NoValidCropLocation("no patch position keeps the nodule inside the lung field")
        top, left = np.unravel_index(rng.choice(candidates), valid.shape)
        return int(top) - rowMin, int(left) - colMin

    def synthesizeImage(self, image, z, diameter, rng, imageId=None):
        if image.getLungMask() is None:
            raise NoValidCropLocation(f"image {image.getImageId()} has no lung mask")
        shapeMask = self.shapeMask(z, diameter)
        origin = self.cropOrigin(image.getLungMask(), shapeMask, image.getShape(), rng)
        half = self.patchSize // 2
        original, _ = cropPatch(image, (origin[0] + half, origin[1] + half), self.patchSize)
        pixels = pastePatch(image.pixels, self.synthesizePatch(original, shapeMask), origin)
        noduleMask = np.zeros(image.getShape(), dtype=np.uint8)
        noduleMask[origin[0] : origin[0] + self.patchSize, origin[1] : origin[1] + self.patchSize] = shapeMask
        imageId = imageId if imageId is not None else f"{image.getImageId()}_syn"
        annotation = makeAnnotation(
            imageId,
            [boxFromMaskBounds(boundingBox(shapeMask), origin)],
            diameters=[estimateDiameter(shapeMask)],
        )
        return CxrImage(np.clip(pixels, 0, 1), imageId, image.getLungMask(), annotation, [noduleMask])


def tileGrid(tiles, rows, cols, gap=2):
    tileHeight, tileWidth = np.asarray(tiles[0]).shape
    canvas = np.ones((rows * tileHeight + (rows - 1) * gap, cols * tileWidth + (cols - 1) * gap))
    for index, tile in enumerate(tiles):
        row, col = divmod(index, cols)
        top = row * (tileHeight + gap)
        left = col * (tileWidth + gap)
        canvas[top : top + tileHeight, left : left + tileWidth] = tile
    return canvas
