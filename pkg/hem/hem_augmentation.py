import copy
import numpy as np
from skimage.draw import polygon2mask
from config.ns_config import (
    AUGMENT,
    N,
    SAMPLING,
    IOU_THRESHOLD,
    OPERATING_FP_RATE,
    CONF_THRESHOLD,
    COMPOSITE,
    RETRY_CAP,
    HISTOGRAM_BINS,
    FP_MAX,
    ConfigException,
    withDefaults,
)
from dataset.annotations import BOXES, CONTOURS, DIAMETERS
from detection.detection_error import NotFitted
from detection.froc import frocSummary, thresholdAtFpRate
from detection.matching import matchDetections
from geometry.geometry_error import EmptyMask, ShapeTooLarge
from geometry.mask_geometry import estimateDiameter
from hem.hem_error import EmptyDistribution, HemError, NoMissedNodules, NoValidCropLocation
from log.ns_logging import exceptionStr, loggingContext, logInfo, logWarning
from shape.shape_gan import sampleLatent

SIZE = "size"
HEM_SAMPLING = "hem"
RANDOM_SAMPLING = "random"
CONTOUR_MARGIN = 2


class AugmentConfig:
    def __init__(self, settings=None):
        self.settings = withDefaults(AUGMENT, settings)
        self.n = self.settings[N]
        self.sampling = self.settings[SAMPLING]
        self.iouThreshold = self.settings[IOU_THRESHOLD]
        self.operatingFpRate = self.settings[OPERATING_FP_RATE]
        self.confThreshold = self.settings[CONF_THRESHOLD]
        self.composite = self.settings[COMPOSITE]
        self.retryCap = self.settings[RETRY_CAP]
        self.histogramBins = self.settings[HISTOGRAM_BINS]
        self.fpMax = self.settings[FP_MAX]
        if self.n < 0:
            raise ConfigException("must be non-negative", f"{AUGMENT}.{N}")
        if not 0 < self.iouThreshold < 1:
            raise ConfigException("must lie in (0, 1)", f"{AUGMENT}.{IOU_THRESHOLD}")

    def withN(self, n):
        return AugmentConfig(dict(self.settings, **{N: n}))


class AttributeDistribution:
    def __init__(self, samples, attribute=SIZE):
        self.attribute = attribute
        self.samples = np.asarray(samples, dtype=np.float64)
        if np.any(self.samples <= 0):
            raise HemError(f"{attribute} samples must be positive")

    def isEmpty(self):
        return self.samples.size == 0

    def histogram(self, bins=10):
        if self.isEmpty():
            return {"counts": [], "edges": []}
        counts, edges = np.histogram(self.samples, bins=bins)
        return {"counts": counts.tolist(), "edges": edges.tolist()}


class AugmentationPlan:
    def __init__(self, diameters, latentSeeds, targetIndices, targetIds):
        if len(diameters) < 1:
            raise HemError("an augmentation plan needs at least one item")
        if not len(diameters) == len(latentSeeds) == len(targetIndices):
            raise HemError("plan diameters, latent seeds and targets must have equal length")
        self.diameters = [float(diameter) for diameter in diameters]
        self.latentSeeds = [int(seed) for seed in latentSeeds]
        self.targetIndices = [int(index) for index in targetIndices]
        self.targetIds = list(targetIds)

    def getN(self):
        return len(self.diameters)


def contourDiameter(contour):
    points = np.asarray(contour, dtype=np.float64)[:, ::-1]
    points = points - points.min(axis=0) + CONTOUR_MARGIN
    shape = tuple(int(extent) + CONTOUR_MARGIN + 1 for extent in np.ceil(points.max(axis=0)))
    return estimateDiameter(polygon2mask(shape, points))


def noduleDiameter(annotation, index):
    diameters = annotation.get(DIAMETERS) or []
    if index < len(diameters):
        return float(diameters[index])
    contours = annotation.get(CONTOURS) or []
    if index < len(contours) and len(contours[index]) >= 3:
        return contourDiameter(contours[index])
    x0, y0, x1, y1 = annotation[BOXES][index]
    logWarning(f"nodule {index} of {annotation.get('image_id')} has no diameter or contour, using its box")
    return float((x1 - x0 + y1 - y0) / 2)


def annotatedSizes(annotations):
    samples = []
    for annotation in annotations:
        for index in range(len(annotation.get(BOXES, []))):
            samples.append(noduleDiameter(annotation, index))
    return AttributeDistribution(samples)


def splitAndMeasure(records, annotations):
    samples = []
    for record, annotation in zip(records, annotations):
        for index in record.missedIndices():
            samples.append(noduleDiameter(annotation, index))
    if not samples:
        raise NoMissedNodules("the detector found every nodule of the mining set")
    return AttributeDistribution(samples)


def sampleDiameters(distribution, n, seed=None, rng=None):
    if distribution.isEmpty():
        raise EmptyDistribution(f"no {distribution.attribute} samples to draw from")
    if n < 1:
        raise HemError(f"number of diameters must be at least 1, got {n}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    return rng.choice(distribution.samples, size=n, replace=True)


def makePlan(distribution, n, normals, seed=None):
    rng = np.random.default_rng(seed)
    diameters = sampleDiameters(distribution, n, rng=rng)
    latentSeeds = rng.integers(0, 2**31 - 1, size=n)
    targetIndices = rng.integers(0, len(normals), size=n)
    targetIds = [normals[index].getImageId() for index in targetIndices]
    return AugmentationPlan(diameters, latentSeeds, targetIndices, targetIds)


def synthesizeAugmentationSet(plan, synthesizer, normals, retryCap=50, seed=None):
    synthesized = []
    for item, (diameter, latentSeed, targetIndex) in enumerate(
        zip(plan.diameters, plan.latentSeeds, plan.targetIndices)
    ):
        latentRng = np.random.default_rng(latentSeed)
        cropRng = np.random.default_rng([latentSeed, 0 if seed is None else seed])
        with loggingContext(item=f"item {item}"):
            for attempt in range(retryCap):
                z = sampleLatent(synthesizer.getLatentDim(), rng=latentRng)
                try:
                    synthesized.append(
                        synthesizer.synthesizeImage(
                            normals[targetIndex], z, diameter, cropRng, imageId=f"syn_{item:05d}"
                        )
                    )
                    break
                except (ShapeTooLarge, EmptyMask, NoValidCropLocation) as exception:
                    if attempt == retryCap - 1:
                        logWarning(f"skipped after {retryCap} attempts: {exceptionStr(exception)}")
    return synthesized


class HemReport:
    def __init__(self, pre, post, histogram, diameters, realCount, syntheticCount, confThreshold, sampling, missed):
        self.pre = pre
        self.post = post
        self.histogram = histogram
        self.diameters = [float(diameter) for diameter in diameters]
        self.realCount = realCount
        self.syntheticCount = syntheticCount
        self.finetuneCount = realCount + syntheticCount
        self.confThreshold = confThreshold
        self.sampling = sampling
        self.missed = missed

    def toDict(self):
        return {
            "pre": self.pre.toDict(),
            "post": self.post.toDict(),
            "histogram": self.histogram,
            "diameters": self.diameters,
            "counts": {"real": self.realCount, "synthesized": self.syntheticCount, "finetune": self.finetuneCount},
            "conf_threshold": self.confThreshold,
            "sampling": self.sampling,
            "missed": self.missed,
        }


def annotationsOf(images):
    return [image.getAnnotation() for image in images]


def evaluateSummary(detector, images, cfg):
    records = detector.evaluate(images, annotationsOf(images), cfg.iouThreshold, 0.0)
    return frocSummary(records, cfg.fpMax, cfg.iouThreshold)


def mineDistribution(detector, realTrain, miningSet, cfg):
    miningAnnotations = annotationsOf(miningSet)
    sweepRecords = detector.evaluate(miningSet, miningAnnotations, cfg.iouThreshold, 0.0)
    confThreshold = cfg.confThreshold
    if confThreshold <= 0:
        confThreshold = thresholdAtFpRate(sweepRecords, cfg.operatingFpRate, cfg.iouThreshold)
    records = [
        matchDetections(record.predictions, record.groundTruths, cfg.iouThreshold, confThreshold, record.imageId)
        for record in sweepRecords
    ]
    missed = sum(len(record.missedIndices()) for record in records)
    logInfo(f"conf threshold {confThreshold:.4f}: {missed} missed nodules")
    if cfg.sampling == RANDOM_SAMPLING:
        return annotatedSizes(annotationsOf(realTrain)), confThreshold, missed
    try:
        return splitAndMeasure(records, miningAnnotations), confThreshold, missed
    except NoMissedNodules as exception:
        logWarning(f"{exceptionStr(exception)}, sampling from every annotated size instead")
        return annotatedSizes(annotationsOf(realTrain)), confThreshold, missed


def runHemCycle(detector, realTrain, miningSet, normals, heldOut, synthesizer, cfg, seed=0):
    # finetunes the detector in place
    if not detector.isFitted():
        raise NotFitted("hard example mining needs a pre-trained detector")
    with loggingContext("hem"):
        pre = evaluateSummary(detector, heldOut, cfg)
        logInfo(f"pre-finetune NODE21 score {pre.node21Score:.4f}")
        with loggingContext(item="mine"):
            distribution, confThreshold, missed = mineDistribution(detector, realTrain, miningSet, cfg)
        histogram = distribution.histogram(cfg.histogramBins)
        diameters = []
        synthesized = []
        if cfg.n > 0:
            with loggingContext(item="synthesize"):
                plan = makePlan(distribution, cfg.n, normals, seed)
                diameters = plan.diameters
                synthesized = synthesizeAugmentationSet(plan, synthesizer, normals, cfg.retryCap, seed)
                logInfo(f"synthesized {len(synthesized)} of {plan.getN()} planned images")
        with loggingContext(item="finetune"):
            finetuneSet = list(realTrain) + synthesized
            detector.finetune(finetuneSet, annotationsOf(finetuneSet))
        post = evaluateSummary(detector, heldOut, cfg)
        logInfo(f"post-finetune NODE21 score {post.node21Score:.4f}")
    report = HemReport(
        pre, post, histogram, diameters, len(realTrain), len(synthesized), confThreshold, cfg.sampling, missed
    )
    return detector, report


def runQuantitySweep(detector, realTrain, miningSet, normals, heldOut, synthesizer, cfg, quantities, seed=0):
    reports = []
    for n in quantities:
        with loggingContext("sweep", f"n={n}"):
            _, report = runHemCycle(
                copy.deepcopy(detector), realTrain, miningSet, normals, heldOut, synthesizer, cfg.withN(n), seed
            )
        reports.append((n, report))
    return reports
