#!/bin/python3

import os
import sys
import argparse
import numpy as np
from config.ns_config import (
    GLOBAL,
    PHANTOM,
    SHAPE_GAN,
    TEXTURE_GAN,
    DETECTOR,
    AUGMENT,
    EVAL,
    DEVICE,
    SEED,
    IMAGE_SIZE,
    EPOCHS,
    N,
    FP_MAX,
    IOU_THRESHOLD,
    CONF_THRESHOLD,
    ConfigException,
    applyOverrides,
    getCacheDir,
    getDefaultConfigFilePath,
    loadConfig,
)
from log.ns_logging import loggingContext, logInfo, logError, exceptionStr
from locking.locking import artifactLock, clearLocks
from dataset.dataset_error import DatasetError
from dataset.dataset_loader import extractNodulePatches, extractShapeMasks, loadDataset
from dataset.image_io import loadMask, saveGrid, saveImage, saveMask, writeJson
from dataset.phantom import PhantomConfig, generatePhantomDataset
from geometry.geometry_error import GeometryError
from geometry.mask_geometry import estimateDiameter, modulateSize
from shape.shape_error import ShapeError
from shape.shape_gan import ShapeGanConfig, loadShapeGenerator, sampleLatent
from shape.shape_training import trainShapeGan
from texture.texture_error import TextureError
from texture.texture_gan import TextureGanConfig, loadTextureGenerator, synthesizeTexture
from texture.texture_losses import FeatureExtractor
from texture.texture_training import trainTextureGan
from metrics.metrics_error import MetricsError
from metrics.quality_metrics import evaluatePatches
from detection.detection_error import DetectionError
from detection.detector import DetectorConfig
from detection.froc import frocSummary
from detection.reference_detector import ReferenceDetector, loadDetector
from hem.hem_error import HemError
from hem.hem_augmentation import AugmentConfig, runHemCycle, runQuantitySweep
from synthesis.nodule_synthesizer import NoduleSynthesizer, tileGrid
from util.intensity import fromModelRange

HANDLED_ERRORS = (
    ConfigException,
    DatasetError,
    GeometryError,
    ShapeError,
    TextureError,
    MetricsError,
    DetectionError,
    HemError,
)
GRID_MODES = ("mask", "patch", "image")


def parseIntList(value):
    try:
        return [int(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got: {value}")


def parseFloatList(value):
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got: {value}")


def parseGrid(value):
    try:
        rows, cols = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid should look like 2x3, got: {value}")
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError(f"grid dimensions must be positive, got: {value}")
    return rows, cols


class NoduleSynth:
    def __init__(self, arguments):
        self.arguments = arguments
        if arguments.config:
            self.configFilePath = arguments.config
        else:
            self.configFilePath = getDefaultConfigFilePath()
            if not os.path.exists(self.configFilePath):
                logInfo(f"config file {self.configFilePath} does not exist, creating it now")
                os.makedirs(os.path.dirname(self.configFilePath), exist_ok=True)
                open(self.configFilePath, "a").close()
        self.config = applyOverrides(loadConfig(self.configFilePath), arguments.set)
        if getattr(arguments, "seed", None) is not None:
            self.config[GLOBAL][SEED] = arguments.seed
        self.seed = self.config[GLOBAL][SEED]
        self.device = self.config[GLOBAL][DEVICE]

    def run(self):
        with loggingContext(self.arguments.command):
            self.arguments.handler(self)

    def loadImages(self, datasetDir):
        normals, nodules = loadDataset(datasetDir)
        return normals, nodules

    def extractor(self, settings):
        cfg = TextureGanConfig(settings)
        return FeatureExtractor(cfg.pretrainedExtractor, getCacheDir(self.config), self.seed)

    def phantom(self):
        arguments = self.arguments
        settings = dict(self.config[PHANTOM])
        if arguments.image_size:
            settings[IMAGE_SIZE] = arguments.image_size
        generatePhantomDataset(PhantomConfig(settings, self.seed), arguments.normals, arguments.nodules, arguments.out)

    def trainShape(self):
        settings = dict(self.config[SHAPE_GAN])
        if self.arguments.epochs:
            settings[EPOCHS] = self.arguments.epochs
        _, nodules = self.loadImages(self.arguments.data)
        checkpointPath, _ = trainShapeGan(
            extractShapeMasks(nodules), ShapeGanConfig(settings), self.seed, self.arguments.out, self.device
        )
        logInfo(f"shape generator: {checkpointPath}")

    def trainTexture(self):
        cfg = TextureGanConfig(self.config[TEXTURE_GAN])
        _, nodules = self.loadImages(self.arguments.data)
        validationPairs = None
        if self.arguments.validation:
            _, validationNodules = self.loadImages(self.arguments.validation)
            validationPairs = extractNodulePatches(validationNodules, cfg.patchSize)
        checkpointPath, _ = trainTextureGan(
            extractNodulePatches(nodules, cfg.patchSize),
            cfg,
            self.seed,
            self.arguments.out,
            self.device,
            validationPairs,
            self.extractor(self.config[TEXTURE_GAN]),
        )
        logInfo(f"texture generator: {checkpointPath}")

    def trainDetector(self):
        normals, nodules = self.loadImages(self.arguments.data)
        images = nodules + normals
        detector = ReferenceDetector(DetectorConfig(self.config[DETECTOR]), self.seed, self.device)
        detector.fit(images, [image.getAnnotation() for image in images])
        with artifactLock(self.arguments.out):
            detector.save(self.arguments.out)
        logInfo(f"detector: {self.arguments.out}")

    def synthesizer(self, textureCheckpoint=None):
        shapeGenerator = loadShapeGenerator(self.arguments.shape_ckpt, self.device)
        textureGenerator = None
        patchSize = TextureGanConfig(self.config[TEXTURE_GAN]).patchSize
        if textureCheckpoint:
            textureGenerator = loadTextureGenerator(textureCheckpoint, self.device)
            patchSize = textureGenerator.patchSize
        return NoduleSynthesizer(
            shapeGenerator,
            textureGenerator,
            patchSize,
            AugmentConfig(self.config[AUGMENT]).composite,
            ShapeGanConfig(self.config[SHAPE_GAN]).binarizeThreshold,
        )

    def generate(self):
        arguments = self.arguments
        rows, cols = arguments.grid
        diameters = arguments.diameters
        if len(diameters) != cols:
            raise ConfigException(f"grid has {cols} columns but {len(diameters)} diameters were given")
        if arguments.mode != "mask" and not (arguments.texture_ckpt and arguments.data):
            raise ConfigException(f"{arguments.mode} mode needs --texture-ckpt and --data")
        synthesizer = self.synthesizer(arguments.texture_ckpt if arguments.mode != "mask" else None)
        normals = self.loadImages(arguments.data)[0] if arguments.mode != "mask" else []
        rng = np.random.default_rng(self.seed)
        tiles = []
        for row in range(rows):
            z = sampleLatent(synthesizer.getLatentDim(), seed=self.seed + row)
            for col, diameter in enumerate(diameters):
                with loggingContext(item=f"seed {self.seed + row}, d {diameter:g}"):
                    if arguments.mode == "mask":
                        tiles.append(synthesizer.shapeMask(z, diameter))
                        continue
                    normal = normals[row % len(normals)]
                    if arguments.mode == "patch":
                        shapeMask = synthesizer.shapeMask(z, diameter)
                        origin = synthesizer.cropOrigin(normal.getLungMask(), shapeMask, normal.getShape(), rng)
                        size = synthesizer.patchSize
                        original = normal.pixels[origin[0] : origin[0] + size, origin[1] : origin[1] + size]
                        tiles.append(synthesizer.synthesizePatch(original, shapeMask))
                        continue
                    image = synthesizer.synthesizeImage(normal, z, diameter, rng, f"generated_{row}_{col}")
                    saveImage(os.path.join(arguments.out, f"{image.getImageId()}.png"), image.pixels)
                    writeJson(os.path.join(arguments.out, f"{image.getImageId()}.json"), image.getAnnotation())
        if tiles:
            saveGrid(arguments.out, tileGrid(tiles, rows, cols))
        logInfo(f"wrote {arguments.mode} output to {arguments.out}")

    def modulate(self):
        arguments = self.arguments
        modulated = modulateSize(loadMask(arguments.input), arguments.d, arguments.canvas)
        saveMask(arguments.out, modulated)
        logInfo(f"measured diameter {estimateDiameter(modulated):.3f}, requested {arguments.d:g}")

    def measure(self):
        print(f"{estimateDiameter(loadMask(self.arguments.input)):.3f}")

    def evaluate(self):
        arguments = self.arguments
        generator = loadTextureGenerator(arguments.texture_ckpt, self.device)
        _, nodules = self.loadImages(arguments.data)
        pairs = extractNodulePatches(nodules, generator.patchSize)
        originals = [patch for patch, _ in pairs]
        masks = [mask for _, mask in pairs]
        synthesized = [fromModelRange(synthesizeTexture(generator, patch, mask)[1]) for patch, mask in pairs]
        extractor = self.extractor(self.config[TEXTURE_GAN]) if arguments.fid else None
        reports = evaluatePatches(originals, synthesized, masks, extractor)
        writeJson(arguments.out, [report.toDict() for report in reports])
        for report in reports:
            logInfo(f"{report.scope}: {report.toDict()}")

    def froc(self):
        arguments = self.arguments
        evalConfig = self.config[EVAL]
        detector = loadDetector(arguments.detector_ckpt, self.device)
        normals, nodules = self.loadImages(arguments.data)
        images = nodules + normals
        annotations = [image.getAnnotation() for image in images]
        records = detector.evaluate(images, annotations, evalConfig[IOU_THRESHOLD], 0.0)
        summary = frocSummary(records, evalConfig[FP_MAX], evalConfig[IOU_THRESHOLD])
        writeJson(arguments.out, summary.toDict())
        operating = detector.evaluate(images, annotations, evalConfig[IOU_THRESHOLD], evalConfig[CONF_THRESHOLD])
        detected = sum(record.numDetected() for record in operating)
        total = sum(len(record.groundTruths) for record in operating)
        logInfo(
            f"AUC {summary.auc:.4f}, sensitivity@0.25 {summary.senAt025:.4f}, "
            f"NODE21 {summary.node21Score:.4f}, detected {detected}/{total} at conf {evalConfig[CONF_THRESHOLD]:g}"
        )
        if arguments.predictions:
            writeJson(arguments.predictions, [record.toDict() for record in records])

    def augment(self):
        arguments = self.arguments
        settings = dict(self.config[AUGMENT])
        if arguments.n is not None:
            settings[N] = arguments.n
        cfg = AugmentConfig(settings)
        detector = loadDetector(arguments.detector_ckpt, self.device)
        normals, nodules = self.loadImages(arguments.data)
        realTrain = nodules + normals
        miningSet = realTrain
        if arguments.mining:
            miningNormals, miningNodules = self.loadImages(arguments.mining)
            miningSet = miningNodules + miningNormals
        heldOutNormals, heldOutNodules = self.loadImages(arguments.held_out)
        heldOut = heldOutNodules + heldOutNormals
        synthesizer = self.synthesizer(arguments.texture_ckpt)
        os.makedirs(arguments.out, exist_ok=True)
        reportPath = os.path.join(arguments.out, "report.json")
        if arguments.sweep:
            reports = runQuantitySweep(
                detector, realTrain, miningSet, normals, heldOut, synthesizer, cfg, arguments.sweep, self.seed
            )
            with artifactLock(reportPath):
                writeJson(reportPath, {str(n): report.toDict() for n, report in reports})
            return
        detector, report = runHemCycle(detector, realTrain, miningSet, normals, heldOut, synthesizer, cfg, self.seed)
        detector.save(os.path.join(arguments.out, "detector_finetuned.pt"))
        with artifactLock(reportPath):
            writeJson(reportPath, report.toDict())
        logInfo(f"report: {reportPath}")


PROGRAM_NAME = "nodule-synth"
VERSION = f"{PROGRAM_NAME} 0.1.0"
parser = argparse.ArgumentParser(
    prog=PROGRAM_NAME, description="Synthesize lung nodules in chest X-rays and augment nodule detectors"
)
parser.add_argument(
    "-v",
    "--version",
    action="version",
    version=VERSION,
    help="show version number and exit",
)
parser.add_argument("-c", "--config", help="use alternative configuration file")
parser.add_argument(
    "-s",
    "--set",
    action="append",
    default=[],
    metavar="SECTION.KEY=VALUE",
    help="override a configuration setting",
)
subparsers = parser.add_subparsers(dest="command", required=True)

phantomParser = subparsers.add_parser("phantom", help="generate a phantom chest X-ray dataset")
phantomParser.add_argument("--seed", type=int)
phantomParser.add_argument("--normals", type=int, default=50)
phantomParser.add_argument("--nodules", type=int, default=50)
phantomParser.add_argument("--image-size", type=int)
phantomParser.add_argument("--out", required=True)
phantomParser.set_defaults(handler=NoduleSynth.phantom)

trainShapeParser = subparsers.add_parser("train-shape", help="train the shape GAN")
trainShapeParser.add_argument("--data", required=True)
trainShapeParser.add_argument("--out", required=True)
trainShapeParser.add_argument("--seed", type=int)
trainShapeParser.add_argument("--epochs", type=int)
trainShapeParser.set_defaults(handler=NoduleSynth.trainShape)

trainTextureParser = subparsers.add_parser("train-texture", help="train the texture GAN")
trainTextureParser.add_argument("--data", required=True)
trainTextureParser.add_argument("--validation", help="dataset whose patches drive the plateau rule")
trainTextureParser.add_argument("--out", required=True)
trainTextureParser.add_argument("--seed", type=int)
trainTextureParser.set_defaults(handler=NoduleSynth.trainTexture)

trainDetectorParser = subparsers.add_parser("train-detector", help="pre-train the reference detector")
trainDetectorParser.add_argument("--data", required=True)
trainDetectorParser.add_argument("--out", required=True, help="checkpoint path")
trainDetectorParser.add_argument("--seed", type=int)
trainDetectorParser.set_defaults(handler=NoduleSynth.trainDetector)

generateParser = subparsers.add_parser("generate", help="render a grid of synthesized nodules")
generateParser.add_argument("--shape-ckpt", required=True)
generateParser.add_argument("--texture-ckpt")
generateParser.add_argument("--data", help="dataset providing normal images for patch and image modes")
generateParser.add_argument("--grid", type=parseGrid, default=(2, 3), help="rows x columns, e.g. 2x3")
generateParser.add_argument("--diameters", type=parseFloatList, default=[40.0, 70.0, 100.0])
generateParser.add_argument("--mode", choices=GRID_MODES, default="mask")
generateParser.add_argument("--seed", type=int)
generateParser.add_argument("--out", required=True, help="grid PNG, or a directory in image mode")
generateParser.set_defaults(handler=NoduleSynth.generate)

modulateParser = subparsers.add_parser("modulate", help="rescale a shape mask to a diameter")
modulateParser.add_argument("--in", dest="input", required=True)
modulateParser.add_argument("--d", type=float, required=True)
modulateParser.add_argument("--canvas", type=int, default=256)
modulateParser.add_argument("--out", required=True)
modulateParser.set_defaults(handler=NoduleSynth.modulate)

measureParser = subparsers.add_parser("measure", help="print the estimated diameter of a mask")
measureParser.add_argument("--in", dest="input", required=True)
measureParser.set_defaults(handler=NoduleSynth.measure)

evalParser = subparsers.add_parser("eval", help="image quality metrics of the texture generator")
evalParser.add_argument("--data", required=True)
evalParser.add_argument("--texture-ckpt", required=True)
evalParser.add_argument("--fid", action="store_true", help="also compute FID")
evalParser.add_argument("--out", required=True)
evalParser.set_defaults(handler=NoduleSynth.evaluate)

frocParser = subparsers.add_parser("froc", help="FROC analysis of a detector")
frocParser.add_argument("--detector-ckpt", required=True)
frocParser.add_argument("--data", required=True)
frocParser.add_argument("--out", required=True)
frocParser.add_argument("--predictions", help="also write per-image predictions")
frocParser.set_defaults(handler=NoduleSynth.froc)

augmentParser = subparsers.add_parser("augment", help="hard example mining augmentation cycle")
augmentParser.add_argument("--detector-ckpt", required=True)
augmentParser.add_argument("--shape-ckpt", required=True)
augmentParser.add_argument("--texture-ckpt", required=True)
augmentParser.add_argument("--data", required=True, help="real training dataset")
augmentParser.add_argument("--mining", help="mining dataset, defaults to the training dataset")
augmentParser.add_argument("--held-out", required=True)
augmentParser.add_argument("--n", type=int)
augmentParser.add_argument("--sweep", type=parseIntList, help="comma separated quantities")
augmentParser.add_argument("--seed", type=int)
augmentParser.add_argument("--out", required=True)
augmentParser.set_defaults(handler=NoduleSynth.augment)


def main(argv=None):
    arguments = parser.parse_args(argv)
    try:
        NoduleSynth(arguments).run()
    except HANDLED_ERRORS as exception:
        logError(exceptionStr(exception))
        sys.exit(-1)
    finally:
        clearLocks()


if __name__ == "__main__":
    main()
