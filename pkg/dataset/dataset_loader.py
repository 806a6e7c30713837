import os
import numpy as np
from dataset.annotations import BOXES
from dataset.cxr_image import CxrImage
from dataset.dataset_error import EmptyDataset, ManifestError
from dataset.image_io import fileChecksum, loadImage, loadMask, readJson
from log.ns_logging import logInfo

MANIFEST_FILE = "manifest.json"
IMAGES_DIR = "images"
LUNGS_DIR = "lungs"
MASKS_DIR = "masks"
ANNOTATIONS_DIR = "annotations"
NORMAL = "normal"
NODULE = "nodule"


def verifyChecksums(datasetDir, manifest):
    for relativePath, expected in manifest.get("checksums", {}).items():
        path = os.path.join(datasetDir, relativePath)
        if not os.path.isfile(path):
            raise ManifestError(f"file listed in manifest is missing: {relativePath}")
        actual = fileChecksum(path)
        if actual != expected:
            raise ManifestError(f"checksum mismatch for {relativePath}")


def loadDataset(datasetDir, verify=True):
    manifestPath = os.path.join(datasetDir, MANIFEST_FILE)
    if not os.path.isfile(manifestPath):
        raise ManifestError(f"no manifest in {datasetDir}")
    manifest = readJson(manifestPath)
    if verify:
        verifyChecksums(datasetDir, manifest)
    normals, nodules = [], []
    for entry in manifest["items"]:
        files = entry["files"]
        image = CxrImage(
            loadImage(os.path.join(datasetDir, files["image"])),
            entry["image_id"],
            loadMask(os.path.join(datasetDir, files["lung"])),
            readJson(os.path.join(datasetDir, files["annotation"])),
            [loadMask(os.path.join(datasetDir, path)) for path in files["masks"]],
        )
        (normals if entry["kind"] == NORMAL else nodules).append(image)
    logInfo(f"loaded {len(normals)} normal and {len(nodules)} nodule images from {datasetDir}")
    return normals, nodules


def windowCenter(center, size, shape):
    half = size // 2
    row = min(max(int(center[0]), half), shape[0] - (size - half))
    col = min(max(int(center[1]), half), shape[1] - (size - half))
    return row, col


def extractNodulePatches(images, size=256):
    patches = []
    for image in images:
        boxes = image.getAnnotation().get(BOXES, [])
        for box, mask in zip(boxes, image.getNoduleMasks()):
            x0, y0, x1, y1 = box
            center = windowCenter(((y0 + y1) / 2, (x0 + x1) / 2), size, image.getShape())
            row, col = center[0] - size // 2, center[1] - size // 2
            patches.append(
                (
                    image.pixels[row : row + size, col : col + size].copy(),
                    mask[row : row + size, col : col + size].copy(),
                )
            )
    if not patches:
        raise EmptyDataset("no annotated nodules to extract patches from")
    return patches


def extractShapeMasks(images):
    shapes = []
    for image in images:
        for mask in image.getNoduleMasks():
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            if len(rows):
                shapes.append(mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1].copy())
    return shapes
