import os
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.draw import ellipse, polygon
from config.ns_config import (
    PHANTOM,
    IMAGE_SIZE,
    RIB_COUNT,
    RIB_AMPLITUDE,
    RIB_CURVATURE,
    LUNG_OFFSET_X,
    LUNG_CENTER_Y,
    LUNG_SEMI_X,
    LUNG_SEMI_Y,
    LUNG_ATTENUATION,
    NOISE_SIGMA,
    NODULE_AMPLITUDE_MIN,
    NODULE_AMPLITUDE_MAX,
    NODULE_SIGMA_FACTOR,
    FOURIER_ORDER,
    FOURIER_AMPLITUDE,
    NODULE_DIAMETER_MIN,
    NODULE_DIAMETER_MAX,
    NODULES_PER_IMAGE,
    WORKERS,
    withDefaults,
)
from dataset.annotations import boxFromMaskBounds, makeAnnotation
from dataset.cxr_image import CxrImage
from dataset.dataset_error import DatasetError
from dataset.dataset_loader import (
    MANIFEST_FILE,
    NORMAL,
    NODULE,
    IMAGES_DIR,
    LUNGS_DIR,
    MASKS_DIR,
    ANNOTATIONS_DIR,
)
from dataset.image_io import fileChecksum, saveImage, saveMask, writeJson
from geometry.mask_geometry import boundingBox, estimateDiameter, rectanglePlacements
from locking.locking import artifactLock
from log.ns_logging import loggingContext, logInfo

CONTOUR_POINTS = 96
# keep nodules far enough from the border for a centred training patch
PATCH_MARGIN = 128
LUNG_JITTER = 0.04


class PhantomConfig:
    def __init__(self, settings=None, seed=0):
        settings = withDefaults(PHANTOM, settings)
        self.imageSize = settings[IMAGE_SIZE]
        self.ribCount = settings[RIB_COUNT]
        self.ribAmplitude = settings[RIB_AMPLITUDE]
        self.ribCurvature = settings[RIB_CURVATURE]
        self.lungOffsetX = settings[LUNG_OFFSET_X]
        self.lungCenterY = settings[LUNG_CENTER_Y]
        self.lungSemiX = settings[LUNG_SEMI_X]
        self.lungSemiY = settings[LUNG_SEMI_Y]
        self.lungAttenuation = settings[LUNG_ATTENUATION]
        self.noiseSigma = settings[NOISE_SIGMA]
        self.noduleAmplitude = (settings[NODULE_AMPLITUDE_MIN], settings[NODULE_AMPLITUDE_MAX])
        self.noduleSigmaFactor = settings[NODULE_SIGMA_FACTOR]
        self.fourierOrder = settings[FOURIER_ORDER]
        self.fourierAmplitude = settings[FOURIER_AMPLITUDE]
        self.noduleDiameter = (settings[NODULE_DIAMETER_MIN], settings[NODULE_DIAMETER_MAX])
        self.nodulesPerImage = settings[NODULES_PER_IMAGE]
        self.workers = settings[WORKERS]
        self.seed = seed
        self.patchMargin = min(PATCH_MARGIN, self.imageSize // 4)
        geometric = (
            self.imageSize,
            self.lungSemiX,
            self.lungSemiY,
            self.noduleSigmaFactor,
            self.noduleDiameter[0],
        )
        if min(geometric) <= 0 or self.noduleDiameter[0] > self.noduleDiameter[1]:
            raise DatasetError("phantom geometric parameters must be positive and ordered")

    def itemRng(self, kind, index):
        return np.random.default_rng([self.seed, 0 if kind == NORMAL else 1, index])


def smoothField(rng, size, sigma):
    field = gaussian_filter(rng.standard_normal((size, size)), sigma=sigma)
    return field / (np.abs(field).max() + 1e-12)


def lungFieldMask(cfg, rng):
    size = cfg.imageSize
    mask = np.zeros((size, size), dtype=np.uint8)
    for side in (-1, 1):
        jitter = 1 + rng.uniform(-LUNG_JITTER, LUNG_JITTER, size=4)
        centerRow = cfg.lungCenterY * size * jitter[0]
        centerCol = (0.5 + side * cfg.lungOffsetX * jitter[1]) * size
        rows, cols = ellipse(
            centerRow,
            centerCol,
            cfg.lungSemiY * size * jitter[2],
            cfg.lungSemiX * size * jitter[3],
            shape=mask.shape,
        )
        mask[rows, cols] = 1
    return mask


def normalImage(cfg, rng):
    size = cfg.imageSize
    lungMask = lungFieldMask(cfg, rng)
    rows, cols = np.mgrid[0:size, 0:size] / size
    body = 0.62 + 0.06 * smoothField(rng, size, size / 12) - 0.12 * (cols - 0.5) ** 2
    softLung = gaussian_filter(lungMask.astype(np.float64), sigma=size / 120)
    phase = rng.uniform(0, 2 * np.pi)
    ribArgument = 2 * np.pi * cfg.ribCount * (rows + cfg.ribCurvature * (cols - 0.5) ** 2) + phase
    ribs = ((1 + np.sin(ribArgument)) / 2) ** 4
    pixels = body - cfg.lungAttenuation * softLung + cfg.ribAmplitude * ribs * softLung
    pixels += rng.normal(0, cfg.noiseSigma, size=pixels.shape)
    return np.clip(pixels, 0, 1), lungMask


def fourierContour(cfg, rng, diameter):
    theta = np.linspace(0, 2 * np.pi, CONTOUR_POINTS, endpoint=False)
    radius = np.ones_like(theta)
    for order in range(2, cfg.fourierOrder + 2):
        amplitude = rng.uniform(-cfg.fourierAmplitude, cfg.fourierAmplitude) / (order - 1)
        radius += amplitude * np.cos(order * theta + rng.uniform(0, 2 * np.pi))
    radius *= diameter / 2
    return np.stack([radius * np.sin(theta), radius * np.cos(theta)], axis=1)


def rasterizeContour(contour, shape):
    mask = np.zeros(shape, dtype=np.uint8)
    rows, cols = polygon(contour[:, 0], contour[:, 1], shape=shape)
    mask[rows, cols] = 1
    return mask


def placeNodule(cfg, rng, pixels, freeLung):
    diameter = rng.uniform(*cfg.noduleDiameter)
    contour = fourierContour(cfg, rng, diameter)
    extent = int(np.ceil(np.abs(contour).max())) + 2
    localSize = 2 * extent + 1
    localMask = rasterizeContour(contour + extent, (localSize, localSize))
    size = cfg.imageSize
    placements = rectanglePlacements(freeLung, localSize, localSize)
    if not placements.size:
        return None
    margin = cfg.patchMargin
    centerLimit = np.zeros_like(placements)
    low = max(0, margin - extent)
    high = size - margin - extent
    centerLimit[low : max(low, high + 1), low : max(low, high + 1)] = True
    candidates = np.flatnonzero(placements & centerLimit)
    if not len(candidates):
        return None
    top, left = np.unravel_index(rng.choice(candidates), placements.shape)
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[top : top + localSize, left : left + localSize] = localMask
    centerRow, centerCol = top + extent, left + extent
    rows, cols = np.mgrid[0:size, 0:size]
    sigma = cfg.noduleSigmaFactor * diameter / 2
    profile = np.exp(-((rows - centerRow) ** 2 + (cols - centerCol) ** 2) / (2 * sigma**2))
    softMask = gaussian_filter(mask.astype(np.float64), sigma=1.0)
    amplitude = rng.uniform(*cfg.noduleAmplitude)
    pixels += amplitude * (0.6 + 0.4 * profile) * softMask
    freeLung[max(0, top - extent) : top + localSize + extent, max(0, left - extent) : left + localSize + extent] = 0
    imageContour = contour + np.array([centerRow, centerCol])
    return mask, imageContour


def noduleImage(cfg, rng):
    pixels, lungMask = normalImage(cfg, rng)
    freeLung = lungMask.copy()
    masks, contours = [], []
    for _ in range(cfg.nodulesPerImage):
        placed = placeNodule(cfg, rng, pixels, freeLung)
        if placed is None:
            break
        masks.append(placed[0])
        contours.append(placed[1])
    return np.clip(pixels, 0, 1), lungMask, masks, contours


def makePhantomImage(cfg, kind, index):
    rng = cfg.itemRng(kind, index)
    imageId = f"{kind}_{index:04d}"
    if kind == NORMAL:
        pixels, lungMask = normalImage(cfg, rng)
        return CxrImage(pixels, imageId, lungMask, makeAnnotation(imageId, contours=[], diameters=[]))
    pixels, lungMask, masks, contours = noduleImage(cfg, rng)
    boxes = [boxFromMaskBounds(boundingBox(mask)) for mask in masks]
    diameters = [estimateDiameter(mask) for mask in masks]
    # contours are stored as [x, y]
    xyContours = [contour[:, ::-1] for contour in contours]
    annotation = makeAnnotation(imageId, boxes, xyContours, diameters)
    return CxrImage(pixels, imageId, lungMask, annotation, masks)


def generatePhantomImages(cfg, nNormal, nNodule):
    normals = [makePhantomImage(cfg, NORMAL, index) for index in range(nNormal)]
    nodules = [makePhantomImage(cfg, NODULE, index) for index in range(nNodule)]
    return normals, nodules


def writePhantomImage(outDir, image, kind):
    imageId = image.getImageId()
    files = {
        "image": os.path.join(IMAGES_DIR, f"{imageId}.png"),
        "lung": os.path.join(LUNGS_DIR, f"{imageId}.png"),
        "annotation": os.path.join(ANNOTATIONS_DIR, f"{imageId}.json"),
        "masks": [
            os.path.join(MASKS_DIR, f"{imageId}_{index}.png")
            for index in range(len(image.getNoduleMasks()))
        ],
    }
    saveImage(os.path.join(outDir, files["image"]), image.pixels)
    saveMask(os.path.join(outDir, files["lung"]), image.getLungMask())
    for relativePath, mask in zip(files["masks"], image.getNoduleMasks()):
        saveMask(os.path.join(outDir, relativePath), mask)
    writeJson(os.path.join(outDir, files["annotation"]), image.getAnnotation())
    paths = [files["image"], files["lung"], files["annotation"], *files["masks"]]
    checksums = {path: fileChecksum(os.path.join(outDir, path)) for path in paths}
    return {"image_id": imageId, "kind": kind, "files": files}, checksums


def generatePhantomDataset(cfg, nNormal, nNodule, outDir):
    if nNormal < 0 or nNodule < 0:
        raise DatasetError("image counts must be non-negative")
    os.makedirs(outDir, exist_ok=True)
    manifestPath = os.path.join(outDir, MANIFEST_FILE)
    entries = []
    checksums = {}
    jobs = [(NORMAL, index) for index in range(nNormal)]
    jobs += [(NODULE, index) for index in range(nNodule)]

    def runJob(job):
        kind, index = job
        with loggingContext("phantom", f"{kind} {index}"):
            image = makePhantomImage(cfg, kind, index)
            entry, fileChecksums = writePhantomImage(outDir, image, kind)
        with artifactLock(manifestPath):
            entries.append(entry)
            checksums.update(fileChecksums)

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as executor:
        list(executor.map(runJob, jobs))
    entries.sort(key=lambda entry: entry["image_id"])
    manifest = {
        "seed": cfg.seed,
        "image_size": cfg.imageSize,
        "normals": nNormal,
        "nodules": nNodule,
        "items": entries,
        "checksums": dict(sorted(checksums.items())),
    }
    with artifactLock(manifestPath):
        writeJson(manifestPath, manifest)
    with loggingContext("phantom"):
        logInfo(f"wrote {nNormal} normal and {nNodule} nodule images to {outDir}")
    return manifest
