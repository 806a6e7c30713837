import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from dataset.annotations import BOXES
from dataset.augmentation import traditionalAugment
from dataset.cxr_image import pixelsOf
from dataset.image_io import loadCheckpoint, saveCheckpoint
from detection.box import Box
from detection.detection_error import NotFitted
from detection.detector import Detector, DetectorConfig
from log.ns_logging import loggingContext, logInfo
from util.intensity import toModelRange
from util.seeding import resolveDevice, seedEverything

OUTPUT_STRIDE = 2
FOCAL_ALPHA = 2
FOCAL_BETA = 4
# sigmoid(-2.19) ~ 0.1, the usual heatmap prior
HEATMAP_PRIOR = -2.19
PROBABILITY_EPSILON = 1e-4


def convBlock(inChannels, outChannels, stride=1, dilation=1):
    return nn.Sequential(
        nn.Conv2d(inChannels, outChannels, 3, stride=stride, padding=dilation, dilation=dilation, bias=False),
        nn.BatchNorm2d(outChannels),
        nn.ReLU(inplace=True),
        nn.Conv2d(outChannels, outChannels, 3, padding=1, bias=False),
        nn.BatchNorm2d(outChannels),
        nn.ReLU(inplace=True),
    )


class HeatmapNet(nn.Module):
    def __init__(self, baseChannels):
        super().__init__()
        c = baseChannels
        self.down1 = convBlock(1, c, stride=2)
        self.down2 = convBlock(c, 2 * c, stride=2)
        self.down3 = convBlock(2 * c, 4 * c, stride=2)
        self.context = convBlock(4 * c, 4 * c, dilation=2)
        self.up2 = convBlock(6 * c, 2 * c)
        self.up1 = convBlock(3 * c, c)
        self.heatmap = nn.Conv2d(c, 1, 1)
        self.size = nn.Conv2d(c, 2, 1)
        nn.init.constant_(self.heatmap.bias, HEATMAP_PRIOR)

    def forward(self, inputs):
        features1 = self.down1(inputs)
        features2 = self.down2(features1)
        features3 = self.context(self.down3(features2))
        up2 = self.up2(torch.cat([F.interpolate(features3, scale_factor=2, mode="nearest"), features2], dim=1))
        up1 = self.up1(torch.cat([F.interpolate(up2, scale_factor=2, mode="nearest"), features1], dim=1))
        return self.heatmap(up1), self.size(up1)


def focalLoss(logits, target):
    probability = torch.sigmoid(logits).clamp(PROBABILITY_EPSILON, 1 - PROBABILITY_EPSILON)
    positive = target.eq(1).float()
    negative = 1 - positive
    positiveLoss = torch.log(probability) * (1 - probability) ** FOCAL_ALPHA * positive
    negativeLoss = (
        torch.log(1 - probability) * probability**FOCAL_ALPHA * (1 - target) ** FOCAL_BETA * negative
    )
    numPositive = positive.sum().clamp(min=1)
    return -(positiveLoss.sum() + negativeLoss.sum()) / numPositive


def sizeLoss(prediction, target, mask):
    return torch.sum(torch.abs(prediction - target) * mask) / mask.sum().clamp(min=1)


class ReferenceDetector(Detector):
    def __init__(self, cfg=None, seed=0, device="cpu"):
        self.cfg = cfg if cfg is not None else DetectorConfig()
        self.seed = seed
        self.device = resolveDevice(str(device))
        self.network = None
        self.rng = np.random.default_rng(seed)

    def isFitted(self):
        return self.network is not None

    def verifyFitted(self, operation):
        if not self.isFitted():
            raise NotFitted(f"{operation} needs a fitted or loaded detector")

    def buildNetwork(self):
        return HeatmapNet(self.cfg.baseChannels).to(self.device)

    def inputScale(self, shape):
        height, width = shape
        return height / self.cfg.inputSize, width / self.cfg.inputSize

    def toInput(self, pixels):
        tensor = torch.as_tensor(toModelRange(pixels), dtype=torch.float32)[None, None]
        return F.interpolate(tensor, size=(self.cfg.inputSize, self.cfg.inputSize), mode="area")

    def encodeTargets(self, boxes, shape):
        cells = self.cfg.inputSize // OUTPUT_STRIDE
        scaleY, scaleX = self.inputScale(shape)
        heat = np.zeros((cells, cells), dtype=np.float32)
        size = np.zeros((2, cells, cells), dtype=np.float32)
        sizeMask = np.zeros((1, cells, cells), dtype=np.float32)
        rows, cols = np.mgrid[0:cells, 0:cells]
        for x0, y0, x1, y1 in boxes:
            width = (x1 - x0) / scaleX
            height = (y1 - y0) / scaleY
            if width <= 0 or height <= 0:
                continue
            cellX = min(int((x0 + x1) / 2 / scaleX // OUTPUT_STRIDE), cells - 1)
            cellY = min(int((y0 + y1) / 2 / scaleY // OUTPUT_STRIDE), cells - 1)
            sigma = max(self.cfg.heatmapSigma, max(width, height) / OUTPUT_STRIDE / 6)
            blob = np.exp(-((cols - cellX) ** 2 + (rows - cellY) ** 2) / (2 * sigma**2))
            heat = np.maximum(heat, blob.astype(np.float32))
            heat[cellY, cellX] = 1.0
            size[:, cellY, cellX] = (np.log(width), np.log(height))
            sizeMask[0, cellY, cellX] = 1.0
        return heat[None], size, sizeMask

    def encodeBatch(self, images, annotations):
        inputs, heats, sizes, sizeMasks = [], [], [], []
        for image, annotation in zip(images, annotations):
            inputs.append(self.toInput(pixelsOf(image)))
            heat, size, sizeMask = self.encodeTargets(annotation.get(BOXES, []), pixelsOf(image).shape)
            heats.append(heat)
            sizes.append(size)
            sizeMasks.append(sizeMask)
        return (
            torch.cat(inputs).to(self.device),
            torch.from_numpy(np.stack(heats)).to(self.device),
            torch.from_numpy(np.stack(sizes)).to(self.device),
            torch.from_numpy(np.stack(sizeMasks)).to(self.device),
        )

    def trainEpochs(self, images, annotations, lr, epochs, stage):
        optimizer = torch.optim.Adam(self.network.parameters(), lr=lr)
        cfg = self.cfg
        with loggingContext(stage):
            for epoch in range(1, epochs + 1):
                self.network.train()
                order = self.rng.permutation(len(images))
                epochLosses = []
                for start in range(0, len(order), cfg.batchSize):
                    batchImages, batchAnnotations = [], []
                    for index in order[start : start + cfg.batchSize]:
                        augmented, annotation = traditionalAugment(
                            images[index],
                            annotations[index],
                            self.rng,
                            cfg.shiftRange,
                            cfg.flipProbability,
                            cfg.shiftProbability,
                        )
                        batchImages.append(augmented)
                        batchAnnotations.append(annotation)
                    inputs, heat, size, sizeMask = self.encodeBatch(batchImages, batchAnnotations)
                    heatLogits, sizePrediction = self.network(inputs)
                    loss = focalLoss(heatLogits, heat) + sizeLoss(sizePrediction, size, sizeMask)
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    epochLosses.append(loss.item())
                if epoch % cfg.logEvery == 0 or epoch == epochs:
                    logInfo(f"epoch {epoch}/{epochs} loss {np.mean(epochLosses):.4f}")

    def fit(self, images, annotations):
        seedEverything(self.seed)
        self.rng = np.random.default_rng(self.seed)
        self.network = self.buildNetwork()
        self.trainEpochs(images, annotations, self.cfg.pretrainLr, self.cfg.pretrainEpochs, "pretrain")
        return self

    def finetune(self, images, annotations):
        self.verifyFitted("finetune")
        self.trainEpochs(images, annotations, self.cfg.finetuneLr, self.cfg.finetuneEpochs, "finetune")
        return self

    def decode(self, heatLogits, sizePrediction, shape):
        probability = torch.sigmoid(heatLogits)[0, 0]
        peaks = probability == F.max_pool2d(probability[None, None], 3, stride=1, padding=1)[0, 0]
        scores = torch.where(peaks, probability, torch.zeros_like(probability)).flatten()
        count = min(self.cfg.maxDetections, scores.numel())
        topScores, topIndices = torch.topk(scores, count)
        scaleY, scaleX = self.inputScale(shape)
        height, width = shape
        cells = probability.shape[1]
        boxes = []
        for score, index in zip(topScores.tolist(), topIndices.tolist()):
            if score < self.cfg.minScore:
                break
            cellY, cellX = divmod(index, cells)
            centerX = (cellX + 0.5) * OUTPUT_STRIDE
            centerY = (cellY + 0.5) * OUTPUT_STRIDE
            boxWidth, boxHeight = torch.exp(sizePrediction[0, :, cellY, cellX]).tolist()
            x0 = max(0.0, (centerX - boxWidth / 2) * scaleX)
            y0 = max(0.0, (centerY - boxHeight / 2) * scaleY)
            x1 = min(float(width), (centerX + boxWidth / 2) * scaleX)
            y1 = min(float(height), (centerY + boxHeight / 2) * scaleY)
            if x1 > x0 and y1 > y0:
                boxes.append(Box(x0, y0, x1, y1, score=min(max(score, 0.0), 1.0)))
        return boxes

    def predict(self, image):
        self.verifyFitted("predict")
        pixels = pixelsOf(image)
        self.network.eval()
        with torch.no_grad():
            heatLogits, sizePrediction = self.network(self.toInput(pixels).to(self.device))
        return self.decode(heatLogits, sizePrediction, pixels.shape)

    def save(self, path):
        self.verifyFitted("save")
        saveCheckpoint(
            path,
            {"network": self.network.state_dict(), "config": self.cfg.settings, "seed": self.seed},
        )

    def load(self, path):
        checkpoint = loadCheckpoint(path, self.device)
        self.cfg = DetectorConfig(checkpoint["config"])
        self.seed = checkpoint.get("seed", self.seed)
        self.network = self.buildNetwork()
        self.network.load_state_dict(checkpoint["network"])
        return self


def loadDetector(path, device="cpu"):
    return ReferenceDetector(device=device).load(path)
