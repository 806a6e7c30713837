import os
import numpy as np
import pytest
import torch
from conftest import makeDisk
from config.ns_config import EPOCHS, BATCH_SIZE, CHECKPOINT_EVERY, OUTPUT_SIZE, ConfigException
from dataset.dataset_error import EmptyDataset
from gan.gan_error import EmptyBatch
from geometry.mask_geometry import cleanMask, countForeground, estimateDiameter
from shape.shape_error import BadLatentDim
from shape.shape_gan import (
    ShapeDiscriminator,
    ShapeGanConfig,
    ShapeGenerator,
    generateShape,
    loadShapeGenerator,
    sampleLatent,
)
from shape.shape_training import preprocessShapeMask, shapeGanLosses, trainShapeGan


def test_default_config_matches_the_published_setup():
    cfg = ShapeGanConfig()
    assert cfg.latentDim == 100
    assert cfg.projectionChannels == 512
    assert cfg.outputSize == 128
    assert cfg.batchSize == 6
    assert cfg.epochs == 1000
    assert (cfg.lrGenerator, cfg.lrDiscriminator) == (1e-4, 1e-5)
    assert cfg.betas == (0.5, 0.999)


def test_output_size_must_follow_the_architecture():
    with pytest.raises(ConfigException):
        ShapeGanConfig({OUTPUT_SIZE: 64})


def test_generator_spatial_progression(smallShapeConfig):
    generator = ShapeGenerator(ShapeGanConfig())
    assert generator.spatialProgression() == [4, 8, 16, 32, 64, 128]
    assert len(generator.upsampleLayers()) == 5
    assert all(layer.stride == (2, 2) and layer.kernel_size == (4, 4) for layer in generator.upsampleLayers())
    assert ShapeGenerator(smallShapeConfig).spatialProgression()[-1] == 128


def test_untrained_generator_contract(smallShapeConfig):
    torch.manual_seed(0)
    generator = ShapeGenerator(smallShapeConfig)
    z = sampleLatent(smallShapeConfig.latentDim, seed=3)
    prob = generateShape(generator, z)
    assert prob.shape == (128, 128)
    assert prob.min() >= 0 and prob.max() <= 1
    assert np.array_equal(prob, generateShape(generator, z))
    nudged = z.copy()
    nudged[5] += 1.0
    assert not np.array_equal(prob, generateShape(generator, nudged))


def test_bad_latent_dim(smallShapeConfig):
    generator = ShapeGenerator(smallShapeConfig)
    with pytest.raises(BadLatentDim):
        generateShape(generator, np.zeros(smallShapeConfig.latentDim + 1))


def test_discriminator_scores_one_value_per_sample(smallShapeConfig):
    discriminator = ShapeDiscriminator(smallShapeConfig)
    assert discriminator(torch.rand(3, 1, 128, 128)).shape == (3,)


def test_loss_fixtures():
    ones = torch.ones(4)
    zeros = torch.zeros(4)
    lossD, _ = shapeGanLosses(ones, zeros)
    assert lossD.item() == 0.0
    _, lossG = shapeGanLosses(ones, torch.full((4,), 0.5))
    assert lossG.item() == pytest.approx(0.125)
    lossD, _ = shapeGanLosses(zeros, ones)
    assert lossD.item() == pytest.approx(1.0)


def test_losses_match_scalar_formulas():
    generator = torch.Generator().manual_seed(0)
    dReal = torch.randn(16, generator=generator, dtype=torch.float64)
    dFake = torch.randn(16, generator=generator, dtype=torch.float64)
    lossD, lossG = shapeGanLosses(dReal, dFake)
    real = dReal.tolist()
    fake = dFake.tolist()
    expectedD = 0.5 * sum((r - 1) ** 2 for r in real) / 16 + 0.5 * sum(f**2 for f in fake) / 16
    expectedG = 0.5 * sum((f - 1) ** 2 for f in fake) / 16
    assert lossD.item() == pytest.approx(expectedD, abs=1e-6)
    assert lossG.item() == pytest.approx(expectedG, abs=1e-6)
    assert lossD.item() >= 0 and lossG.item() >= 0


def test_empty_score_batch():
    with pytest.raises(EmptyBatch):
        shapeGanLosses(torch.ones(2), torch.ones(0))


def test_preprocessing_normalizes_size(smallShapeConfig):
    processed = preprocessShapeMask(makeDisk(9, 40), smallShapeConfig)
    assert processed.shape == (128, 128)
    assert set(np.unique(processed)) <= {0.0, 1.0}
    # 100 px at 256 is 50 px at 128
    assert estimateDiameter(processed) == pytest.approx(50, abs=2)


def test_empty_dataset(tmp_path, smallShapeConfig):
    with pytest.raises(EmptyDataset):
        trainShapeGan([], smallShapeConfig, 0, str(tmp_path))


def shortTrainingConfig(epochs):
    return ShapeGanConfig(
        {
            "latent-dim": 16,
            "projection-channels": 32,
            EPOCHS: epochs,
            BATCH_SIZE: 4,
            CHECKPOINT_EVERY: 2,
        }
    )


def test_training_writes_checkpoints_and_finite_losses(tmp_path):
    masks = [makeDisk(radius, 40) for radius in (6, 8, 10, 12, 14, 16)]
    checkpointPath, rows = trainShapeGan(masks, shortTrainingConfig(3), 0, str(tmp_path))
    assert os.path.basename(checkpointPath) == "shape_gan_epoch3.pt"
    assert os.path.exists(tmp_path / "shape_gan_epoch2.pt")
    assert [row["epoch"] for row in rows] == [1, 2, 3]
    assert all(np.isfinite(row["loss_D"]) and np.isfinite(row["loss_G"]) for row in rows)
    header = (tmp_path / "shape_gan_losses.csv").read_text().splitlines()[0]
    assert header == "epoch,loss_D,loss_G"
    generator = loadShapeGenerator(checkpointPath)
    assert generateShape(generator, sampleLatent(16, seed=0)).shape == (128, 128)


def test_training_is_reproducible(tmp_path):
    masks = [makeDisk(radius, 40) for radius in (6, 9, 12, 15)]
    _, first = trainShapeGan(masks, shortTrainingConfig(2), 5, str(tmp_path / "a"))
    _, second = trainShapeGan(masks, shortTrainingConfig(2), 5, str(tmp_path / "b"))
    assert first == second


@pytest.mark.slow
def test_overfit_produces_non_degenerate_shapes(tmp_path, smallPhantomConfig):
    from dataset.dataset_loader import extractShapeMasks
    from dataset.phantom import generatePhantomImages

    _, nodules = generatePhantomImages(smallPhantomConfig, 0, 32)
    cfg = ShapeGanConfig(
        {"latent-dim": 32, "projection-channels": 64, EPOCHS: 150, BATCH_SIZE: 8, CHECKPOINT_EVERY: 150}
    )
    checkpointPath, rows = trainShapeGan(extractShapeMasks(nodules), cfg, 0, str(tmp_path))
    assert all(np.isfinite(row["loss_D"]) for row in rows)
    generator = loadShapeGenerator(checkpointPath)
    for seed in range(8):
        prob = generateShape(generator, sampleLatent(32, seed=seed))
        binary = prob >= 0.5
        fraction = binary.mean()
        assert 0.01 <= fraction <= 0.6
        assert countForeground(cleanMask(prob)) >= 0.9 * binary.sum()
    z = sampleLatent(32, seed=0)
    nudged = z.copy()
    nudged[0] += 1.0
    assert np.abs(generateShape(generator, z) - generateShape(generator, nudged)).max() > 0


def maskIou(a, b):
    return np.logical_and(a, b).sum() / np.logical_or(a, b).sum()


@pytest.mark.slow
def test_identical_masks_are_reproduced(tmp_path):
    mask = makeDisk(14, 40)
    cfg = ShapeGanConfig(
        {"latent-dim": 32, "projection-channels": 64, EPOCHS: 300, BATCH_SIZE: 8, CHECKPOINT_EVERY: 300}
    )
    checkpointPath, _ = trainShapeGan([mask] * 16, cfg, 0, str(tmp_path))
    target = preprocessShapeMask(mask, cfg) >= 0.5
    generator = loadShapeGenerator(checkpointPath)
    ious = [maskIou(generateShape(generator, sampleLatent(32, seed=seed)) >= 0.5, target) for seed in range(8)]
    assert np.mean(ious) > 0.8
