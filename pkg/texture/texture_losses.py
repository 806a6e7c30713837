import torch
import torch.nn as nn
from torchvision.models import VGG16_Weights, vgg16
from gan.lsgan import lsganDiscriminatorLoss, lsganGeneratorLoss
from log.ns_logging import exceptionStr, logWarning
from texture.texture_error import SizeMismatch

# vgg16().features indices closing pool1, pool2 and pool3
POOL_TAPS = (5, 10, 17)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
LOSS_KEYS = ("L_rec1", "L_rec2", "L_perc", "L_adv_G", "total")


class FeatureExtractor(nn.Module):
    def __init__(self, pretrained=False, cacheDir=None, seed=0):
        super().__init__()
        features = None
        self.pretrained = False
        if pretrained:
            try:
                if cacheDir:
                    torch.hub.set_dir(cacheDir)
                features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
                self.pretrained = True
            except Exception as exception:
                logWarning(f"pretrained extractor unavailable, using random weights: {exceptionStr(exception)}")
        if features is None:
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(seed)
                features = vgg16(weights=None).features
        starts = (0,) + POOL_TAPS[:-1]
        self.slices = nn.ModuleList(
            nn.Sequential(*features[start:end]) for start, end in zip(starts, POOL_TAPS)
        )
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        for parameter in self.parameters():
            parameter.requires_grad_(False)
        self.eval()

    def train(self, mode=True):
        # frozen: never leaves eval mode
        return super().train(False)

    def forward(self, images):
        features = ((images + 1) / 2).expand(-1, 3, -1, -1)
        features = (features - self.mean) / self.std
        taps = []
        for block in self.slices:
            features = block(features)
            taps.append(features)
        return taps


def verifySameSize(*tensors):
    shapes = {tuple(tensor.shape[-2:]) for tensor in tensors}
    if len(shapes) != 1:
        raise SizeMismatch(f"loss inputs differ in spatial size: {sorted(shapes)}")


def perceptualLoss(extractor, target, output):
    loss = 0
    for targetTap, outputTap in zip(extractor(target), extractor(output)):
        loss = loss + torch.mean(torch.abs(targetTap - outputTap))
    return loss


def textureLosses(coarseOut, refinedOut, target, targetMask, dScoresFake, extractor, weights):
    verifySameSize(coarseOut, refinedOut, target, targetMask)
    losses = {
        "L_rec1": torch.mean(torch.abs(target - coarseOut)),
        "L_rec2": torch.mean(torch.abs(target - refinedOut)),
        "L_perc": perceptualLoss(extractor, target, refinedOut),
        "L_adv_G": lsganGeneratorLoss(dScoresFake),
    }
    losses["total"] = (
        weights.rec1 * losses["L_rec1"]
        + weights.rec2 * losses["L_rec2"]
        + weights.perc * losses["L_perc"]
        + weights.adv * losses["L_adv_G"]
    )
    return losses


def textureDiscriminatorLoss(dScoresReal, dScoresFake):
    return lsganDiscriminatorLoss(dScoresReal, dScoresFake)
