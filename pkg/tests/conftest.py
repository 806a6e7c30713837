import os
import sys
import numpy as np
import pytest
import torch
import torch.nn as nn
from skimage.draw import disk

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from config.ns_config import (  # noqa: E402
    IMAGE_SIZE,
    NODULE_DIAMETER_MIN,
    NODULE_DIAMETER_MAX,
    WORKERS,
    PATCH_SIZE,
    BASE_CHANNELS,
    DISCRIMINATOR_CHANNELS,
    BATCH_SIZE,
    PRETRAINED_EXTRACTOR,
    LATENT_DIM,
    PROJECTION_CHANNELS,
)
from dataset.phantom import PhantomConfig  # noqa: E402
from shape.shape_gan import ShapeGanConfig  # noqa: E402
from texture.texture_gan import TextureGanConfig  # noqa: E402
from texture.texture_losses import FeatureExtractor  # noqa: E402


def makeDisk(radius, size, center=None):
    mask = np.zeros((size, size), dtype=np.uint8)
    center = center if center is not None else (size // 2, size // 2)
    rows, cols = disk(center, radius, shape=mask.shape)
    mask[rows, cols] = 1
    return mask


class DiskShapeGenerator(nn.Module):
    """Stands in for a trained shape generator: always a centred disk."""

    def __init__(self, latentDim=16, radius=20, size=128):
        super().__init__()
        self.latentDim = latentDim
        self.anchor = nn.Parameter(torch.zeros(1))
        self.register_buffer("prob", torch.from_numpy(makeDisk(radius, size).astype(np.float32)))

    def forward(self, z):
        return (self.prob + 0 * self.anchor).expand(z.shape[0], 1, -1, -1)


@pytest.fixture
def diskMask():
    return makeDisk


@pytest.fixture
def smallPhantomConfig():
    settings = {
        IMAGE_SIZE: 256,
        NODULE_DIAMETER_MIN: 10.0,
        NODULE_DIAMETER_MAX: 22.0,
        WORKERS: 2,
    }
    return PhantomConfig(settings, seed=7)


@pytest.fixture
def smallShapeConfig():
    return ShapeGanConfig({LATENT_DIM: 16, PROJECTION_CHANNELS: 32})


@pytest.fixture
def smallTextureConfig():
    return TextureGanConfig(
        {
            PATCH_SIZE: 32,
            BASE_CHANNELS: 4,
            DISCRIMINATOR_CHANNELS: 4,
            BATCH_SIZE: 2,
            PRETRAINED_EXTRACTOR: False,
        }
    )


@pytest.fixture(scope="session")
def randomExtractor():
    return FeatureExtractor(pretrained=False, seed=0)


@pytest.fixture
def diskShapeGenerator():
    return DiskShapeGenerator()
