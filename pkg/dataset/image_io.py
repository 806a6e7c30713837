import csv
import hashlib
import io
import json
import os
import tempfile
import numpy as np
import torch
from PIL import Image
from locking.locking import artifactLock

UINT16_MAX = 65535
MASK_ON = 255
MASK_THRESHOLD = 127


def ensureParentDir(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return parent


def atomicWriteBytes(path, data):
    parent = ensureParentDir(path)
    fileDescriptor, tempPath = tempfile.mkstemp(
        dir=parent, prefix=f".{os.path.basename(path)}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fileDescriptor, "wb") as tempFile:
            tempFile.write(data)
            tempFile.flush()
            os.fsync(tempFile.fileno())
        os.replace(tempPath, path)
    except BaseException:
        if os.path.exists(tempPath):
            os.unlink(tempPath)
        raise


def pngBytes(image):
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def saveImage(path, pixels):
    quantized = np.round(np.clip(pixels, 0, 1) * UINT16_MAX).astype(np.uint16)
    atomicWriteBytes(path, pngBytes(Image.fromarray(quantized)))


def loadImage(path):
    with Image.open(path) as image:
        scale = 255 if image.mode == "L" else UINT16_MAX
        pixels = np.array(image)
    return pixels.astype(np.float64) / scale


def saveMask(path, mask):
    values = (np.asarray(mask) > 0).astype(np.uint8) * MASK_ON
    atomicWriteBytes(path, pngBytes(Image.fromarray(values)))


def loadMask(path):
    with Image.open(path) as image:
        values = np.array(image.convert("L"))
    return (values > MASK_THRESHOLD).astype(np.uint8)


def saveGrid(path, pixels):
    values = np.round(np.clip(pixels, 0, 1) * 255).astype(np.uint8)
    atomicWriteBytes(path, pngBytes(Image.fromarray(values)))


def writeJson(path, data):
    text = json.dumps(data, indent=2, sort_keys=True)
    atomicWriteBytes(path, (text + "\n").encode())


def readJson(path):
    with open(path, "r") as jsonFile:
        return json.load(jsonFile)


def saveCheckpoint(path, payload):
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    atomicWriteBytes(path, buffer.getvalue())


def loadCheckpoint(path, device="cpu"):
    return torch.load(path, map_location=device, weights_only=False)


def fileChecksum(path):
    digest = hashlib.sha256()
    with open(path, "rb") as checkedFile:
        for block in iter(lambda: checkedFile.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class CsvLog:
    def __init__(self, path, columns):
        self.path = path
        self.columns = list(columns)
        self.rows = []

    def append(self, row):
        with artifactLock(self.path):
            self.rows.append([row[column] for column in self.columns])
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(self.columns)
            writer.writerows(self.rows)
            atomicWriteBytes(self.path, buffer.getvalue().encode())

    def getRows(self):
        return [dict(zip(self.columns, row)) for row in self.rows]
