import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils import spectral_norm
from config.ns_config import (
    TEXTURE_GAN,
    PATCH_SIZE,
    BASE_CHANNELS,
    STAGES,
    CONDITION,
    BATCH_SIZE,
    LR_PHASE1,
    LR_PHASE2,
    DISCRIMINATOR_LR_RATIO,
    DISCRIMINATOR_CHANNELS,
    BETA1,
    BETA2,
    WEIGHT_REC1,
    WEIGHT_REC2,
    WEIGHT_PERC,
    WEIGHT_ADV,
    MAX_EPOCHS_PER_PHASE,
    MAX_STEPS_PER_PHASE,
    PLATEAU_PATIENCE,
    PLATEAU_TOLERANCE,
    PADDING_MODE,
    PRETRAINED_EXTRACTOR,
    CHECKPOINT_EVERY,
    LOG_EVERY,
    ConfigException,
    withDefaults,
)
from dataset.image_io import loadCheckpoint
from geometry.geometry_error import EmptyMask
from geometry.mask_geometry import boxMask, countForeground, toBinaryMask
from texture.gated_conv import GatedConv2d
from texture.texture_error import SizeMismatch
from util.intensity import toModelRange

DILATIONS = (2, 4, 8, 16)
INPUT_CHANNELS = 4
DISCRIMINATOR_DOWNSAMPLES = 5
LEAKY_SLOPE = 0.2


class LossWeights:
    def __init__(self, rec1=1.0, rec2=1.0, perc=1.0, adv=1.0):
        for name, weight in (("rec1", rec1), ("rec2", rec2), ("perc", perc), ("adv", adv)):
            if weight < 0:
                raise ConfigException(f"loss weight {name} must be non-negative, got {weight}")
        self.rec1 = rec1
        self.rec2 = rec2
        self.perc = perc
        self.adv = adv


class TextureGanConfig:
    def __init__(self, settings=None):
        self.settings = withDefaults(TEXTURE_GAN, settings)
        self.patchSize = self.settings[PATCH_SIZE]
        self.baseChannels = self.settings[BASE_CHANNELS]
        self.stages = self.settings[STAGES]
        self.condition = self.settings[CONDITION]
        self.batchSize = self.settings[BATCH_SIZE]
        self.lrPhases = (self.settings[LR_PHASE1], self.settings[LR_PHASE2])
        self.discriminatorLrRatio = self.settings[DISCRIMINATOR_LR_RATIO]
        self.discriminatorChannels = self.settings[DISCRIMINATOR_CHANNELS]
        self.betas = (self.settings[BETA1], self.settings[BETA2])
        self.weights = LossWeights(
            self.settings[WEIGHT_REC1],
            self.settings[WEIGHT_REC2],
            self.settings[WEIGHT_PERC],
            self.settings[WEIGHT_ADV],
        )
        self.maxEpochsPerPhase = self.settings[MAX_EPOCHS_PER_PHASE]
        self.maxStepsPerPhase = self.settings[MAX_STEPS_PER_PHASE]
        self.plateauPatience = self.settings[PLATEAU_PATIENCE]
        self.plateauTolerance = self.settings[PLATEAU_TOLERANCE]
        self.paddingMode = self.settings[PADDING_MODE]
        self.pretrainedExtractor = self.settings[PRETRAINED_EXTRACTOR]
        self.checkpointEvery = self.settings[CHECKPOINT_EVERY]
        self.logEvery = self.settings[LOG_EVERY]
        self.dilations = DILATIONS
        if self.stages not in (1, 2):
            raise ConfigException("must be 1 or 2", f"{TEXTURE_GAN}.{STAGES}")
        if self.patchSize % 4:
            raise ConfigException(
                "must be divisible by 4", f"{TEXTURE_GAN}.{PATCH_SIZE}"
            )


class TextureStage(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        c = cfg.baseChannels
        tail = max(c // 2, 1)
        pad = cfg.paddingMode
        self.encoder = nn.Sequential(
            GatedConv2d(INPUT_CHANNELS, c, 5, paddingMode=pad),
            GatedConv2d(c, 2 * c, 3, stride=2, paddingMode=pad),
            GatedConv2d(2 * c, 2 * c, 3, paddingMode=pad),
            GatedConv2d(2 * c, 4 * c, 3, stride=2, paddingMode=pad),
            GatedConv2d(4 * c, 4 * c, 3, paddingMode=pad),
            GatedConv2d(4 * c, 4 * c, 3, paddingMode=pad),
        )
        self.bottleneck = nn.Sequential(
            *(GatedConv2d(4 * c, 4 * c, 3, dilation=dilation, paddingMode=pad) for dilation in cfg.dilations)
        )
        self.decoder = nn.Sequential(
            GatedConv2d(4 * c, 4 * c, 3, paddingMode=pad),
            GatedConv2d(4 * c, 4 * c, 3, paddingMode=pad),
            nn.Upsample(scale_factor=2, mode="nearest"),
            GatedConv2d(4 * c, 2 * c, 3, paddingMode=pad),
            GatedConv2d(2 * c, 2 * c, 3, paddingMode=pad),
            nn.Upsample(scale_factor=2, mode="nearest"),
            GatedConv2d(2 * c, c, 3, paddingMode=pad),
            GatedConv2d(c, tail, 3, paddingMode=pad),
        )
        self.output = nn.Conv2d(tail, 1, 3, padding=1, padding_mode=pad)

    def forward(self, inputs):
        features = self.decoder(self.bottleneck(self.encoder(inputs)))
        return torch.tanh(self.output(features))

    def bottleneckDilations(self):
        return tuple(layer.dilation for layer in self.bottleneck)

    def topology(self):
        described = []
        for layer in self.modules():
            if isinstance(layer, GatedConv2d):
                described.append(layer.describe())
            elif isinstance(layer, nn.Upsample):
                described.append(("upsample", layer.scale_factor))
        return described


def makeInput(image, mask):
    if image.shape != mask.shape:
        raise SizeMismatch(f"patch {tuple(image.shape)} and mask {tuple(mask.shape)} differ")
    # the maximum intensity is 1.0 in both [0, 1] and [-1, 1]
    filled = image * (1 - mask) + mask
    return torch.cat([filled, filled, filled, mask], dim=1)


class TextureGenerator(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.condition = cfg.condition
        self.patchSize = cfg.patchSize
        self.coarse = TextureStage(cfg)
        self.refine = TextureStage(cfg) if cfg.stages == 2 else None

    def forward(self, image, mask):
        coarseOut = self.coarse(makeInput(image, mask))
        if self.refine is None:
            return coarseOut, coarseOut
        return coarseOut, self.refine(torch.cat([coarseOut, coarseOut, coarseOut, mask], dim=1))


class PatchDiscriminator(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        c = cfg.discriminatorChannels
        widths = [2] + [c * min(2**index, 4) for index in range(DISCRIMINATOR_DOWNSAMPLES)]
        layers = []
        for inChannels, outChannels in zip(widths, widths[1:]):
            layers += [
                spectral_norm(nn.Conv2d(inChannels, outChannels, 5, stride=2, padding=2)),
                nn.LeakyReLU(LEAKY_SLOPE),
            ]
        layers.append(spectral_norm(nn.Conv2d(widths[-1], 1, 3, stride=1, padding=1)))
        self.net = nn.Sequential(*layers)

    def forward(self, image, mask):
        return self.net(torch.cat([image, mask], dim=1))

    def convLayers(self):
        return [layer for layer in self.net if isinstance(layer, nn.Conv2d)]


def conditionMask(shapeMask, condition):
    return boxMask(shapeMask) if condition == "box" else toBinaryMask(shapeMask)


def patchTensor(pixels, device):
    return torch.as_tensor(np.asarray(pixels), dtype=torch.float32, device=device)[None, None]


def synthesizeTexture(generator, original, shapeMask):
    original = np.asarray(original, dtype=np.float64)
    shapeMask = toBinaryMask(shapeMask)
    if original.shape != shapeMask.shape:
        raise SizeMismatch(f"patch {original.shape} and mask {shapeMask.shape} differ")
    if not countForeground(shapeMask):
        raise EmptyMask("texture synthesis needs a non-empty shape mask")
    device = next(generator.parameters()).device
    mask = patchTensor(conditionMask(shapeMask, generator.condition), device)
    image = patchTensor(toModelRange(original), device)
    generator.eval()
    with torch.no_grad():
        coarseOut, refinedOut = generator(image, mask)
    return (
        coarseOut[0, 0].cpu().numpy().astype(np.float64),
        refinedOut[0, 0].cpu().numpy().astype(np.float64),
    )


def composite(original, shapeMask, synthesized):
    original = np.asarray(original)
    synthesized = np.asarray(synthesized)
    shapeMask = np.asarray(shapeMask)
    if not original.shape == shapeMask.shape == synthesized.shape:
        raise SizeMismatch(
            f"composite inputs differ in size: {original.shape}, {shapeMask.shape}, {synthesized.shape}"
        )
    return np.where(shapeMask > 0, synthesized, original)


def loadTextureGenerator(checkpointPath, device="cpu"):
    checkpoint = loadCheckpoint(checkpointPath, device)
    generator = TextureGenerator(TextureGanConfig(checkpoint["config"]))
    generator.load_state_dict(checkpoint["generator"])
    return generator.to(device).eval()
