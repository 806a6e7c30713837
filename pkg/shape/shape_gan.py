import numpy as np
import torch
import torch.nn as nn
from config.ns_config import (
    SHAPE_GAN,
    LATENT_DIM,
    PROJECTION_CHANNELS,
    EPOCHS,
    BATCH_SIZE,
    LR_GENERATOR,
    LR_DISCRIMINATOR,
    BETA1,
    BETA2,
    NORMALIZED_DIAMETER,
    TRAINING_CANVAS,
    OUTPUT_SIZE,
    BINARIZE_THRESHOLD,
    CHECKPOINT_EVERY,
    ConfigException,
    withDefaults,
)
from dataset.image_io import loadCheckpoint
from shape.shape_error import BadLatentDim

BASE_SIZE = 4
UPSAMPLE_LAYERS = 5
KERNEL_SIZE = 4
STRIDE = 2
LEAKY_SLOPE = 0.2


class ShapeGanConfig:
    def __init__(self, settings=None):
        self.settings = withDefaults(SHAPE_GAN, settings)
        self.latentDim = self.settings[LATENT_DIM]
        self.projectionChannels = self.settings[PROJECTION_CHANNELS]
        self.epochs = self.settings[EPOCHS]
        self.batchSize = self.settings[BATCH_SIZE]
        self.lrGenerator = self.settings[LR_GENERATOR]
        self.lrDiscriminator = self.settings[LR_DISCRIMINATOR]
        self.betas = (self.settings[BETA1], self.settings[BETA2])
        self.normalizedDiameter = self.settings[NORMALIZED_DIAMETER]
        self.trainingCanvas = self.settings[TRAINING_CANVAS]
        self.outputSize = self.settings[OUTPUT_SIZE]
        self.binarizeThreshold = self.settings[BINARIZE_THRESHOLD]
        self.checkpointEvery = self.settings[CHECKPOINT_EVERY]
        if BASE_SIZE * STRIDE**UPSAMPLE_LAYERS != self.outputSize:
            raise ConfigException(
                f"must equal {BASE_SIZE * STRIDE**UPSAMPLE_LAYERS} for {UPSAMPLE_LAYERS} stride-{STRIDE} layers",
                f"{SHAPE_GAN}.{OUTPUT_SIZE}",
            )
        if self.projectionChannels % 2 ** (UPSAMPLE_LAYERS - 1):
            raise ConfigException(
                f"must be divisible by {2 ** (UPSAMPLE_LAYERS - 1)}",
                f"{SHAPE_GAN}.{PROJECTION_CHANNELS}",
            )

    def channelLadder(self):
        # projection -> ... -> last hidden width, halving per layer
        return [self.projectionChannels // 2**index for index in range(UPSAMPLE_LAYERS)]


class ShapeGenerator(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.latentDim = cfg.latentDim
        ladder = cfg.channelLadder()
        self.project = nn.Sequential(
            nn.ConvTranspose2d(cfg.latentDim, ladder[0], BASE_SIZE, 1, 0, bias=False),
            nn.BatchNorm2d(ladder[0]),
            nn.ReLU(True),
        )
        layers = []
        for inChannels, outChannels in zip(ladder, ladder[1:]):
            layers += [
                nn.ConvTranspose2d(inChannels, outChannels, KERNEL_SIZE, STRIDE, 1, bias=False),
                nn.BatchNorm2d(outChannels),
                nn.ReLU(True),
            ]
        layers += [
            nn.ConvTranspose2d(ladder[-1], 1, KERNEL_SIZE, STRIDE, 1, bias=False),
            nn.Sigmoid(),
        ]
        self.upsample = nn.Sequential(*layers)
        progression = self.spatialProgression()
        assert progression[-1] == cfg.outputSize, progression

    def upsampleLayers(self):
        return [layer for layer in self.upsample if isinstance(layer, nn.ConvTranspose2d)]

    def spatialProgression(self):
        sizes = [BASE_SIZE]
        for layer in self.upsampleLayers():
            kernel, stride, padding = layer.kernel_size[0], layer.stride[0], layer.padding[0]
            sizes.append((sizes[-1] - 1) * stride - 2 * padding + kernel)
        return sizes

    def forward(self, z):
        return self.upsample(self.project(z.view(z.shape[0], self.latentDim, 1, 1)))


class ShapeDiscriminator(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        ladder = list(reversed(cfg.channelLadder()))
        layers = [
            nn.Conv2d(1, ladder[0], KERNEL_SIZE, STRIDE, 1, bias=False),
            nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
        ]
        for inChannels, outChannels in zip(ladder, ladder[1:]):
            layers += [
                nn.Conv2d(inChannels, outChannels, KERNEL_SIZE, STRIDE, 1, bias=False),
                nn.BatchNorm2d(outChannels),
                nn.LeakyReLU(LEAKY_SLOPE, inplace=True),
            ]
        layers.append(nn.Conv2d(ladder[-1], 1, BASE_SIZE, 1, 0, bias=False))
        self.net = nn.Sequential(*layers)

    def forward(self, masks):
        return self.net(masks).view(-1)


def initWeights(module):
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


def sampleLatent(latentDim, seed=None, rng=None):
    rng = rng if rng is not None else np.random.default_rng(seed)
    return rng.standard_normal(latentDim)


def generateShape(generator, z):
    z = torch.as_tensor(np.asarray(z), dtype=torch.float32).flatten()
    if z.numel() != generator.latentDim:
        raise BadLatentDim(f"latent vector has {z.numel()} values, expected {generator.latentDim}")
    device = next(generator.parameters()).device
    generator.eval()
    with torch.no_grad():
        prob = generator(z.view(1, -1).to(device))
    return prob[0, 0].cpu().numpy().astype(np.float64)


def loadShapeGenerator(checkpointPath, device="cpu"):
    checkpoint = loadCheckpoint(checkpointPath, device)
    generator = ShapeGenerator(ShapeGanConfig(checkpoint["config"]))
    generator.load_state_dict(checkpoint["generator"])
    return generator.to(device).eval()
