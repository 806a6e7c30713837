import os
import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset
from dataset.dataset_error import EmptyDataset
from dataset.image_io import CsvLog, saveCheckpoint
from log.ns_logging import loggingContext, logInfo
from texture.texture_error import SizeMismatch
from texture.texture_gan import PatchDiscriminator, TextureGenerator, conditionMask
from texture.texture_losses import FeatureExtractor, textureDiscriminatorLoss, textureLosses
from util.intensity import toModelRange
from util.seeding import resolveDevice, seedEverything, torchGenerator

LOSS_COLUMNS = ("step", "L_rec1", "L_rec2", "L_perc", "L_adv_G", "L_D")


def checkpointName(phase, step):
    return f"texture_gan_phase{phase}_step{step}.pt"


def pairTensors(pairs, cfg):
    images, masks = [], []
    for index, (patch, mask) in enumerate(pairs):
        patch = np.asarray(patch, dtype=np.float64)
        mask = np.asarray(mask)
        expected = (cfg.patchSize, cfg.patchSize)
        if patch.shape != expected or mask.shape != expected:
            raise SizeMismatch(
                f"training pair {index}: patch {patch.shape} and mask {mask.shape}, expected {expected}"
            )
        images.append(toModelRange(patch))
        masks.append(conditionMask(mask, cfg.condition))
    images = torch.from_numpy(np.stack(images).astype(np.float32)).unsqueeze(1)
    masks = torch.from_numpy(np.stack(masks).astype(np.float32)).unsqueeze(1)
    return images, masks


def setLearningRate(optimizer, lr):
    for group in optimizer.param_groups:
        group["lr"] = lr


def meanRefinedError(generator, images, masks, device, batchSize):
    errors = []
    with torch.no_grad():
        for start in range(0, len(images), batchSize):
            image = images[start : start + batchSize].to(device)
            mask = masks[start : start + batchSize].to(device)
            _, refinedOut = generator(image, mask)
            errors.append(torch.mean(torch.abs(image - refinedOut), dim=(1, 2, 3)))
    return torch.cat(errors).mean().item()


class PlateauMonitor:
    def __init__(self, patience, tolerance):
        self.patience = patience
        self.tolerance = tolerance
        self.best = None
        self.stale = 0

    def update(self, value):
        if self.best is None or value < self.best * (1 - self.tolerance):
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def trainTextureGan(pairs, cfg, seed, outDir, device="cpu", validationPairs=None, extractor=None):
    if not len(pairs):
        raise EmptyDataset("texture GAN needs at least one (patch, mask) pair")
    seedEverything(seed)
    device = resolveDevice(str(device))
    images, masks = pairTensors(pairs, cfg)
    validation = pairTensors(validationPairs, cfg) if validationPairs else None
    loader = DataLoader(
        TensorDataset(images, masks),
        batch_size=cfg.batchSize,
        shuffle=True,
        generator=torchGenerator(seed),
    )
    generator = TextureGenerator(cfg).to(device)
    discriminator = PatchDiscriminator(cfg).to(device)
    if extractor is None:
        extractor = FeatureExtractor(cfg.pretrainedExtractor, seed=seed)
    extractor = extractor.to(device)
    optimizerG = torch.optim.Adam(generator.parameters(), lr=cfg.lrPhases[0], betas=cfg.betas)
    optimizerD = torch.optim.Adam(
        discriminator.parameters(), lr=cfg.lrPhases[0] * cfg.discriminatorLrRatio, betas=cfg.betas
    )
    os.makedirs(outDir, exist_ok=True)
    lossLog = CsvLog(os.path.join(outDir, "texture_gan_losses.csv"), LOSS_COLUMNS)
    step = 0
    checkpointPath = None

    def writeCheckpoint(phase):
        path = os.path.join(outDir, checkpointName(phase, step))
        saveCheckpoint(
            path,
            {
                "generator": generator.state_dict(),
                "discriminator": discriminator.state_dict(),
                "config": cfg.settings,
                "phase": phase,
                "step": step,
            },
        )
        return path

    for phase, lr in enumerate(cfg.lrPhases, start=1):
        setLearningRate(optimizerG, lr)
        setLearningRate(optimizerD, lr * cfg.discriminatorLrRatio)
        monitor = PlateauMonitor(cfg.plateauPatience, cfg.plateauTolerance)
        phaseSteps = 0
        with loggingContext("train-texture", f"phase {phase}"):
            logInfo(f"lr_G {lr:g}, lr_D {lr * cfg.discriminatorLrRatio:g}")
            for epoch in range(1, cfg.maxEpochsPerPhase + 1):
                generator.train()
                discriminator.train()
                epochRefined = []
                for image, mask in loader:
                    image, mask = image.to(device), mask.to(device)
                    coarseOut, refinedOut = generator(image, mask)
                    lossD = textureDiscriminatorLoss(
                        discriminator(image, mask), discriminator(refinedOut.detach(), mask)
                    )
                    optimizerD.zero_grad()
                    lossD.backward()
                    optimizerD.step()
                    losses = textureLosses(
                        coarseOut,
                        refinedOut,
                        image,
                        mask,
                        discriminator(refinedOut, mask),
                        extractor,
                        cfg.weights,
                    )
                    optimizerG.zero_grad()
                    losses["total"].backward()
                    optimizerG.step()
                    step += 1
                    phaseSteps += 1
                    row = {key: losses[key].item() for key in LOSS_COLUMNS[1:-1]}
                    row.update(step=step, L_D=lossD.item())
                    lossLog.append(row)
                    epochRefined.append(row["L_rec2"])
                    if step % cfg.logEvery == 0:
                        logInfo(
                            f"step {step} L_rec1 {row['L_rec1']:.4f} L_rec2 {row['L_rec2']:.4f} "
                            f"L_perc {row['L_perc']:.4f} L_adv_G {row['L_adv_G']:.4f} L_D {row['L_D']:.4f}"
                        )
                    if step % cfg.checkpointEvery == 0:
                        checkpointPath = writeCheckpoint(phase)
                    if cfg.maxStepsPerPhase and phaseSteps >= cfg.maxStepsPerPhase:
                        break
                if validation is not None:
                    monitored = meanRefinedError(generator, *validation, device, cfg.batchSize)
                else:
                    monitored = float(np.mean(epochRefined))
                if cfg.maxStepsPerPhase and phaseSteps >= cfg.maxStepsPerPhase:
                    logInfo(f"step budget reached after {epoch} epochs")
                    break
                if monitor.update(monitored):
                    logInfo(f"converged after {epoch} epochs, monitored L_rec2 {monitored:.5f}")
                    break
            checkpointPath = writeCheckpoint(phase)
            logInfo(f"checkpoint: {checkpointPath}")
    return checkpointPath, lossLog.getRows()
