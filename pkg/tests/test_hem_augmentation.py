import numpy as np
import pytest
import torch
from scipy.stats import ks_2samp
from config.ns_config import (
    N,
    SAMPLING,
    CONF_THRESHOLD,
    IOU_THRESHOLD,
    PATCH_SIZE,
    BASE_CHANNELS,
    DISCRIMINATOR_CHANNELS,
    PRETRAINED_EXTRACTOR,
    ConfigException,
)
from dataset.annotations import BOXES, DIAMETERS, makeAnnotation
from dataset.phantom import generatePhantomImages
from detection.box import Box
from detection.detection_error import NotFitted
from detection.detector import Detector
from detection.matching import matchDetections
from hem.hem_augmentation import (
    AttributeDistribution,
    AugmentConfig,
    AugmentationPlan,
    annotatedSizes,
    makePlan,
    noduleDiameter,
    runHemCycle,
    runQuantitySweep,
    sampleDiameters,
    splitAndMeasure,
    synthesizeAugmentationSet,
)
from hem.hem_error import EmptyDistribution, HemError, NoMissedNodules
from synthesis.nodule_synthesizer import NoduleSynthesizer
from texture.texture_gan import TextureGanConfig, TextureGenerator


class SizeThresholdDetector(Detector):
    """Finds exactly the annotated nodules at least minDiameter across."""

    def __init__(self, minDiameter):
        self.minDiameter = minDiameter
        self.fitted = False
        self.finetuneSets = []

    def fit(self, images, annotations):
        self.fitted = True
        return self

    def finetune(self, images, annotations):
        self.finetuneSets.append(list(images))
        return self

    def predict(self, image):
        annotation = image.getAnnotation()
        return [
            Box.fromList(box, 0.9)
            for box, diameter in zip(annotation[BOXES], annotation[DIAMETERS])
            if diameter >= self.minDiameter
        ]

    def save(self, path):
        pass

    def load(self, path):
        return self

    def isFitted(self):
        return self.fitted


@pytest.fixture
def phantomWorld(smallPhantomConfig):
    normals, nodules = generatePhantomImages(smallPhantomConfig, 3, 12)
    return normals, nodules[:8], nodules[8:]


@pytest.fixture
def synthesizer(diskShapeGenerator):
    torch.manual_seed(0)
    cfg = TextureGanConfig(
        {PATCH_SIZE: 128, BASE_CHANNELS: 4, DISCRIMINATOR_CHANNELS: 4, PRETRAINED_EXTRACTOR: False}
    )
    return NoduleSynthesizer(diskShapeGenerator, TextureGenerator(cfg), patchSize=128)


def trainDiameters(images):
    return [diameter for image in images for diameter in image.getAnnotation()[DIAMETERS]]


def medianDetector(images):
    diameters = sorted(trainDiameters(images))
    detector = SizeThresholdDetector(diameters[len(diameters) // 2])
    return detector.fit(images, [image.getAnnotation() for image in images])


def test_augment_config():
    cfg = AugmentConfig()
    assert (cfg.n, cfg.sampling, cfg.iouThreshold, cfg.operatingFpRate) == (200, "hem", 0.2, 0.25)
    assert cfg.withN(7).n == 7
    with pytest.raises(ConfigException):
        AugmentConfig({N: -1})
    with pytest.raises(ConfigException):
        AugmentConfig({IOU_THRESHOLD: 1.0})


def test_distribution_and_plan_checks():
    with pytest.raises(HemError):
        AttributeDistribution([3.0, -1.0])
    with pytest.raises(HemError):
        AugmentationPlan([], [], [], [])
    with pytest.raises(HemError):
        AugmentationPlan([10.0], [1, 2], [0], ["a"])
    histogram = AttributeDistribution([10.0, 12.0, 20.0]).histogram(2)
    assert histogram["counts"] == [2, 1]
    assert AttributeDistribution([]).histogram() == {"counts": [], "edges": []}


def test_sample_diameters():
    distribution = AttributeDistribution([14.0, 20.0, 31.5])
    samples = sampleDiameters(distribution, 500, seed=3)
    assert len(samples) == 500
    assert set(samples) <= {14.0, 20.0, 31.5}
    assert np.array_equal(samples, sampleDiameters(distribution, 500, seed=3))
    with pytest.raises(EmptyDistribution):
        sampleDiameters(AttributeDistribution([]), 5, seed=0)
    with pytest.raises(HemError):
        sampleDiameters(distribution, 0, seed=0)


def test_sampled_diameters_follow_the_mined_sizes():
    mined = np.random.default_rng(11).uniform(10, 60, size=200)
    samples = sampleDiameters(AttributeDistribution(mined), 30000, seed=12)
    assert ks_2samp(samples, mined).pvalue > 0.01


def test_nodule_diameter_sources():
    annotation = makeAnnotation("a", [[0, 0, 10, 20]], diameters=[13.5])
    assert noduleDiameter(annotation, 0) == 13.5
    angles = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    circle = np.stack([50 + 10 * np.cos(angles), 50 + 10 * np.sin(angles)], axis=1)
    contoured = makeAnnotation("b", [[40, 40, 60, 60]], contours=[circle])
    assert noduleDiameter(contoured, 0) == pytest.approx(20.0, abs=1.5)
    boxOnly = makeAnnotation("c", [[0, 0, 10, 20]])
    assert noduleDiameter(boxOnly, 0) == 15.0
    assert sorted(annotatedSizes([annotation, boxOnly]).samples) == [13.5, 15.0]


def test_split_and_measure():
    annotation = makeAnnotation("a", [[0, 0, 10, 10], [50, 50, 70, 70]], diameters=[10.0, 20.0])
    groundTruths = [Box.fromList(box) for box in annotation[BOXES]]
    record = matchDetections([Box(50, 50, 70, 70, 0.9)], groundTruths)
    assert splitAndMeasure([record], [annotation]).samples.tolist() == [10.0]
    everything = matchDetections([Box(0, 0, 10, 10, 0.8), Box(50, 50, 70, 70, 0.9)], groundTruths)
    with pytest.raises(NoMissedNodules):
        splitAndMeasure([everything], [annotation])


def test_plan_is_reproducible(phantomWorld):
    normals, _, _ = phantomWorld
    distribution = AttributeDistribution([12.0, 15.0])
    first = makePlan(distribution, 6, normals, seed=2)
    second = makePlan(distribution, 6, normals, seed=2)
    assert first.diameters == second.diameters
    assert first.latentSeeds == second.latentSeeds
    assert first.targetIds == second.targetIds
    assert all(targetId.startswith("normal") for targetId in first.targetIds)


def test_synthesized_set_matches_the_plan(phantomWorld, synthesizer):
    normals, _, _ = phantomWorld
    plan = makePlan(AttributeDistribution([12.0, 16.0, 20.0]), 3, normals, seed=0)
    images = synthesizeAugmentationSet(plan, synthesizer, normals, seed=0)
    assert [image.getImageId() for image in images] == ["syn_00000", "syn_00001", "syn_00002"]
    for image, diameter in zip(images, plan.diameters):
        assert abs(image.getAnnotation()[DIAMETERS][0] - diameter) <= 1.0


def test_unfitted_detector_is_rejected(phantomWorld, synthesizer):
    normals, train, heldOut = phantomWorld
    with pytest.raises(NotFitted):
        runHemCycle(SizeThresholdDetector(15.0), train, train, normals, heldOut, synthesizer, AugmentConfig({N: 2}))


def test_hem_cycle_bookkeeping(phantomWorld, synthesizer):
    normals, train, heldOut = phantomWorld
    detector = medianDetector(train)
    missedSizes = [d for d in trainDiameters(train) if d < detector.minDiameter]
    finetuned, report = runHemCycle(detector, train, train, normals, heldOut, synthesizer, AugmentConfig({N: 4}), 1)
    assert finetuned is detector
    assert report.confThreshold == 0.9
    assert report.missed == len(missedSizes)
    assert set(report.diameters) <= set(missedSizes)
    assert len(report.diameters) == 4
    assert report.syntheticCount == 4
    assert report.finetuneCount == len(train) + 4
    (finetuneSet,) = detector.finetuneSets
    assert len(finetuneSet) == len(train) + 4
    assert [image.getImageId() for image in finetuneSet[len(train):]] == [f"syn_{i:05d}" for i in range(4)]
    assert report.pre.node21Score == report.post.node21Score
    data = report.toDict()
    assert data["counts"] == {"real": len(train), "synthesized": 4, "finetune": len(train) + 4}
    assert sum(data["histogram"]["counts"]) == len(missedSizes)


def test_fixed_conf_threshold_and_random_sampling(phantomWorld, synthesizer):
    normals, train, heldOut = phantomWorld
    cfg = AugmentConfig({N: 2, SAMPLING: "random", CONF_THRESHOLD: 0.5})
    _, report = runHemCycle(medianDetector(train), train, train, normals, heldOut, synthesizer, cfg)
    assert report.confThreshold == 0.5
    assert report.sampling == "random"
    assert sum(report.histogram["counts"]) == len(trainDiameters(train))


def test_no_missed_nodules_falls_back_to_all_sizes(phantomWorld, synthesizer):
    normals, train, heldOut = phantomWorld
    detector = SizeThresholdDetector(0.0).fit(train, None)
    _, report = runHemCycle(detector, train, train, normals, heldOut, synthesizer, AugmentConfig({N: 1}))
    assert report.missed == 0
    assert sum(report.histogram["counts"]) == len(trainDiameters(train))


def test_zero_synthesized_images(phantomWorld, synthesizer):
    normals, train, heldOut = phantomWorld
    detector = medianDetector(train)
    _, report = runHemCycle(detector, train, train, normals, heldOut, synthesizer, AugmentConfig({N: 0}))
    assert report.syntheticCount == 0 and report.diameters == []
    assert len(detector.finetuneSets[0]) == len(train)


def test_quantity_sweep_copies_the_detector(phantomWorld, synthesizer):
    normals, train, heldOut = phantomWorld
    detector = medianDetector(train)
    reports = runQuantitySweep(detector, train, train, normals, heldOut, synthesizer, AugmentConfig(), [0, 2])
    assert [n for n, _ in reports] == [0, 2]
    assert [report.syntheticCount for _, report in reports] == [0, 2]
    assert detector.finetuneSets == []


@pytest.mark.slow
def test_finetune_without_synthesis_stays_close(smallPhantomConfig, synthesizer):
    from config.ns_config import INPUT_SIZE, PRETRAIN_EPOCHS
    from detection.detector import DetectorConfig
    from detection.reference_detector import ReferenceDetector

    normals, nodules = generatePhantomImages(smallPhantomConfig, 8, 80)
    train, heldOut = nodules[:64], nodules[64:]
    detector = ReferenceDetector(DetectorConfig({INPUT_SIZE: 256, PRETRAIN_EPOCHS: 40}), seed=0)
    detector.fit(train, [image.getAnnotation() for image in train])
    _, report = runHemCycle(detector, train, train, normals, heldOut, synthesizer, AugmentConfig({N: 0}))
    assert abs(report.post.node21Score - report.pre.node21Score) <= 0.05


@pytest.mark.slow
def test_hem_cycle_keeps_the_score_across_seeds(tmp_path, randomExtractor, diskShapeGenerator):
    from config.ns_config import (
        IMAGE_SIZE,
        NODULE_DIAMETER_MIN,
        NODULE_DIAMETER_MAX,
        WORKERS,
        INPUT_SIZE,
        BATCH_SIZE,
        MAX_STEPS_PER_PHASE,
        MAX_EPOCHS_PER_PHASE,
        CHECKPOINT_EVERY,
    )
    from dataset.dataset_loader import extractNodulePatches
    from dataset.phantom import PhantomConfig
    from detection.detector import DetectorConfig
    from detection.reference_detector import ReferenceDetector
    from texture.texture_gan import loadTextureGenerator
    from texture.texture_training import trainTextureGan

    phantomSettings = {IMAGE_SIZE: 256, NODULE_DIAMETER_MIN: 10.0, NODULE_DIAMETER_MAX: 22.0, WORKERS: 2}
    _, texturePatches = generatePhantomImages(PhantomConfig(phantomSettings, seed=100), 0, 32)
    textureCfg = TextureGanConfig(
        {
            PATCH_SIZE: 128,
            BASE_CHANNELS: 8,
            DISCRIMINATOR_CHANNELS: 8,
            BATCH_SIZE: 4,
            PRETRAINED_EXTRACTOR: False,
            MAX_EPOCHS_PER_PHASE: 300,
            MAX_STEPS_PER_PHASE: 300,
            CHECKPOINT_EVERY: 300,
        }
    )
    checkpointPath, _ = trainTextureGan(
        extractNodulePatches(texturePatches, 128), textureCfg, 0, str(tmp_path), extractor=randomExtractor
    )
    synthesizer = NoduleSynthesizer(diskShapeGenerator, loadTextureGenerator(checkpointPath), patchSize=128)

    preScores = []
    postScores = []
    for seed in range(5):
        normals, nodules = generatePhantomImages(PhantomConfig(phantomSettings, seed=seed), 40, 500)
        train, heldOut = nodules[:400], nodules[400:]
        detector = ReferenceDetector(DetectorConfig({INPUT_SIZE: 256}), seed=seed)
        detector.fit(train, [image.getAnnotation() for image in train])
        _, report = runHemCycle(detector, train, train, normals, heldOut, synthesizer, AugmentConfig({N: 200}), seed)
        assert report.syntheticCount > 0
        preScores.append(report.pre.node21Score)
        postScores.append(report.post.node21Score)
    assert np.mean(postScores) >= np.mean(preScores) - 0.01
