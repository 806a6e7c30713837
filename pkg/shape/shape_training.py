import os
import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset
from skimage.transform import downscale_local_mean, resize
from dataset.dataset_error import EmptyDataset
from dataset.image_io import CsvLog, saveCheckpoint
from gan.lsgan import lsganDiscriminatorLoss, lsganGeneratorLoss
from geometry.mask_geometry import modulateSize
from log.ns_logging import loggingContext, logInfo
from shape.shape_gan import ShapeDiscriminator, ShapeGenerator, initWeights
from util.seeding import resolveDevice, seedEverything, torchGenerator

LOSS_COLUMNS = ("epoch", "loss_D", "loss_G")


def shapeGanLosses(dReal, dFake):
    return lsganDiscriminatorLoss(dReal, dFake), lsganGeneratorLoss(dFake)


def areaResample(mask, size):
    factor = mask.shape[0] // size
    if factor * size == mask.shape[0] and mask.shape[0] == mask.shape[1]:
        return downscale_local_mean(mask.astype(np.float64), (factor, factor))
    return resize(mask.astype(np.float64), (size, size), order=1, anti_aliasing=True)


def preprocessShapeMask(mask, cfg):
    # diameter is normalized on the training canvas, i.e. after resampling
    normalized = modulateSize(mask, cfg.normalizedDiameter, cfg.trainingCanvas)
    return (areaResample(normalized, cfg.outputSize) >= 0.5).astype(np.float32)


def checkpointName(epoch):
    return f"shape_gan_epoch{epoch}.pt"


def trainShapeGan(shapeMasks, cfg, seed, outDir, device="cpu"):
    if not len(shapeMasks):
        raise EmptyDataset("shape GAN needs at least one training mask")
    seedEverything(seed)
    device = resolveDevice(str(device))
    data = torch.from_numpy(np.stack([preprocessShapeMask(mask, cfg) for mask in shapeMasks]))
    loader = DataLoader(
        TensorDataset(data.unsqueeze(1)),
        batch_size=cfg.batchSize,
        shuffle=True,
        generator=torchGenerator(seed),
    )
    generator = ShapeGenerator(cfg).to(device)
    discriminator = ShapeDiscriminator(cfg).to(device)
    generator.apply(initWeights)
    discriminator.apply(initWeights)
    optimizerG = torch.optim.Adam(generator.parameters(), lr=cfg.lrGenerator, betas=cfg.betas)
    optimizerD = torch.optim.Adam(discriminator.parameters(), lr=cfg.lrDiscriminator, betas=cfg.betas)
    os.makedirs(outDir, exist_ok=True)
    lossLog = CsvLog(os.path.join(outDir, "shape_gan_losses.csv"), LOSS_COLUMNS)
    checkpointPath = None
    with loggingContext("train-shape"):
        logInfo(f"training on {len(data)} masks for {cfg.epochs} epochs")
        for epoch in range(1, cfg.epochs + 1):
            generator.train()
            discriminator.train()
            sumD, sumG, batches = 0.0, 0.0, 0
            for (real,) in loader:
                real = real.to(device)
                z = torch.randn(real.shape[0], cfg.latentDim, device=device)
                fake = generator(z)
                lossD, _ = shapeGanLosses(discriminator(real), discriminator(fake.detach()))
                optimizerD.zero_grad()
                lossD.backward()
                optimizerD.step()
                lossG = lsganGeneratorLoss(discriminator(fake))
                optimizerG.zero_grad()
                lossG.backward()
                optimizerG.step()
                sumD += lossD.item()
                sumG += lossG.item()
                batches += 1
            row = {"epoch": epoch, "loss_D": sumD / batches, "loss_G": sumG / batches}
            lossLog.append(row)
            with loggingContext(item=f"epoch {epoch}"):
                logInfo(f"loss_D {row['loss_D']:.6f} loss_G {row['loss_G']:.6f}")
            if epoch % cfg.checkpointEvery == 0 or epoch == cfg.epochs:
                checkpointPath = os.path.join(outDir, checkpointName(epoch))
                saveCheckpoint(
                    checkpointPath,
                    {
                        "generator": generator.state_dict(),
                        "discriminator": discriminator.state_dict(),
                        "config": cfg.settings,
                        "epoch": epoch,
                    },
                )
        logInfo(f"final checkpoint: {checkpointPath}")
    return checkpointPath, lossLog.getRows()
