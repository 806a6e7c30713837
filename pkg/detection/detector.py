from abc import ABC, abstractmethod
from config.ns_config import (
    DETECTOR,
    INPUT_SIZE,
    BASE_CHANNELS,
    BATCH_SIZE,
    PRETRAIN_LR,
    PRETRAIN_EPOCHS,
    FINETUNE_LR,
    FINETUNE_EPOCHS,
    MAX_DETECTIONS,
    MIN_SCORE,
    HEATMAP_SIGMA,
    SHIFT_RANGE,
    SHIFT_PROBABILITY,
    FLIP_PROBABILITY,
    LOG_EVERY,
    ConfigException,
    withDefaults,
)
from dataset.annotations import BOXES
from detection.box import Box
from detection.matching import matchDetections


class DetectorConfig:
    def __init__(self, settings=None):
        self.settings = withDefaults(DETECTOR, settings)
        self.inputSize = self.settings[INPUT_SIZE]
        self.baseChannels = self.settings[BASE_CHANNELS]
        self.batchSize = self.settings[BATCH_SIZE]
        self.pretrainLr = self.settings[PRETRAIN_LR]
        self.pretrainEpochs = self.settings[PRETRAIN_EPOCHS]
        self.finetuneLr = self.settings[FINETUNE_LR]
        self.finetuneEpochs = self.settings[FINETUNE_EPOCHS]
        self.maxDetections = self.settings[MAX_DETECTIONS]
        self.minScore = self.settings[MIN_SCORE]
        self.heatmapSigma = self.settings[HEATMAP_SIGMA]
        self.shiftRange = self.settings[SHIFT_RANGE]
        self.shiftProbability = self.settings[SHIFT_PROBABILITY]
        self.flipProbability = self.settings[FLIP_PROBABILITY]
        self.logEvery = self.settings[LOG_EVERY]
        if self.inputSize % 8:
            raise ConfigException("must be divisible by 8", f"{DETECTOR}.{INPUT_SIZE}")


class Detector(ABC):
    """Nodule detector seam used by evaluation and hard example mining.

    fit trains from scratch at the pre-training learning rate; finetune
    continues from the fitted (or loaded) weights at the lower one.
    """

    @abstractmethod
    def fit(self, images, annotations):
        pass

    @abstractmethod
    def finetune(self, images, annotations):
        pass

    @abstractmethod
    def predict(self, image):
        pass

    @abstractmethod
    def save(self, path):
        pass

    @abstractmethod
    def load(self, path):
        pass

    @abstractmethod
    def isFitted(self):
        pass

    def predictMany(self, images):
        return [self.predict(image) for image in images]

    def evaluate(self, images, annotations, iouThreshold=0.2, confThreshold=0.0):
        records = []
        for image, annotation in zip(images, annotations):
            groundTruths = [Box.fromList(box) for box in annotation.get(BOXES, [])]
            records.append(
                matchDetections(
                    self.predict(image),
                    groundTruths,
                    iouThreshold,
                    confThreshold,
                    image.getImageId(),
                )
            )
        return records
