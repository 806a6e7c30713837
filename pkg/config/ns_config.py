import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from appdirs import user_cache_dir, user_config_dir

PROGRAM_DIR_NAME = "nodule-synth"
CACHE_ENV_VAR = "NODULESYNTH_CACHE"


class ConfigException(Exception):
    def __init__(self, message, keyPath=None):
        self.message = f"{keyPath}: {message}" if keyPath else message
        self.keyPath = keyPath


# sections
GLOBAL = "global"
PHANTOM = "phantom"
SHAPE_GAN = "shape-gan"
TEXTURE_GAN = "texture-gan"
DETECTOR = "detector"
AUGMENT = "augment"
EVAL = "eval"

# global settings
DEVICE = "device"
SEED = "seed"
CACHE_DIR = "cache-dir"

# phantom settings
IMAGE_SIZE = "image-size"
RIB_COUNT = "rib-count"
RIB_AMPLITUDE = "rib-amplitude"
RIB_CURVATURE = "rib-curvature"
LUNG_OFFSET_X = "lung-offset-x"
LUNG_CENTER_Y = "lung-center-y"
LUNG_SEMI_X = "lung-semi-x"
LUNG_SEMI_Y = "lung-semi-y"
LUNG_ATTENUATION = "lung-attenuation"
NOISE_SIGMA = "noise-sigma"
NODULE_AMPLITUDE_MIN = "nodule-amplitude-min"
NODULE_AMPLITUDE_MAX = "nodule-amplitude-max"
NODULE_SIGMA_FACTOR = "nodule-sigma-factor"
FOURIER_ORDER = "fourier-order"
FOURIER_AMPLITUDE = "fourier-amplitude"
NODULE_DIAMETER_MIN = "nodule-diameter-min"
NODULE_DIAMETER_MAX = "nodule-diameter-max"
NODULES_PER_IMAGE = "nodules-per-image"
WORKERS = "workers"

# shared training settings
BATCH_SIZE = "batch-size"
BETA1 = "beta1"
BETA2 = "beta2"
BASE_CHANNELS = "base-channels"
CHECKPOINT_EVERY = "checkpoint-every"
LOG_EVERY = "log-every"

# shape gan settings
LATENT_DIM = "latent-dim"
PROJECTION_CHANNELS = "projection-channels"
EPOCHS = "epochs"
LR_GENERATOR = "lr-generator"
LR_DISCRIMINATOR = "lr-discriminator"
NORMALIZED_DIAMETER = "normalized-diameter"
TRAINING_CANVAS = "training-canvas"
OUTPUT_SIZE = "output-size"
BINARIZE_THRESHOLD = "binarize-threshold"

# texture gan settings
PATCH_SIZE = "patch-size"
STAGES = "stages"
CONDITION = "condition"
LR_PHASE1 = "lr-phase1"
LR_PHASE2 = "lr-phase2"
DISCRIMINATOR_LR_RATIO = "discriminator-lr-ratio"
DISCRIMINATOR_CHANNELS = "discriminator-channels"
WEIGHT_REC1 = "weight-rec1"
WEIGHT_REC2 = "weight-rec2"
WEIGHT_PERC = "weight-perc"
WEIGHT_ADV = "weight-adv"
MAX_EPOCHS_PER_PHASE = "max-epochs-per-phase"
MAX_STEPS_PER_PHASE = "max-steps-per-phase"
PLATEAU_PATIENCE = "plateau-patience"
PLATEAU_TOLERANCE = "plateau-tolerance"
PADDING_MODE = "padding-mode"
PRETRAINED_EXTRACTOR = "pretrained-extractor"

# detector settings
INPUT_SIZE = "input-size"
PRETRAIN_LR = "pretrain-lr"
PRETRAIN_EPOCHS = "pretrain-epochs"
FINETUNE_LR = "finetune-lr"
FINETUNE_EPOCHS = "finetune-epochs"
MAX_DETECTIONS = "max-detections"
MIN_SCORE = "min-score"
HEATMAP_SIGMA = "heatmap-sigma"
SHIFT_RANGE = "shift-range"
SHIFT_PROBABILITY = "shift-probability"
FLIP_PROBABILITY = "flip-probability"

# augment settings
N = "n"
SAMPLING = "sampling"
IOU_THRESHOLD = "iou-threshold"
OPERATING_FP_RATE = "operating-fp-rate"
CONF_THRESHOLD = "conf-threshold"
COMPOSITE = "composite"
RETRY_CAP = "retry-cap"
HISTOGRAM_BINS = "histogram-bins"
FP_MAX = "fp-max"

CONDITIONS = ("shape", "box")
SAMPLING_STRATEGIES = ("hem", "random")
PADDING_MODES = ("zeros", "reflect")

GLOBAL_SETTINGS = {DEVICE: str, SEED: int, CACHE_DIR: str}
PHANTOM_SETTINGS = {
    IMAGE_SIZE: int,
    RIB_COUNT: int,
    RIB_AMPLITUDE: float,
    RIB_CURVATURE: float,
    LUNG_OFFSET_X: float,
    LUNG_CENTER_Y: float,
    LUNG_SEMI_X: float,
    LUNG_SEMI_Y: float,
    LUNG_ATTENUATION: float,
    NOISE_SIGMA: float,
    NODULE_AMPLITUDE_MIN: float,
    NODULE_AMPLITUDE_MAX: float,
    NODULE_SIGMA_FACTOR: float,
    FOURIER_ORDER: int,
    FOURIER_AMPLITUDE: float,
    NODULE_DIAMETER_MIN: float,
    NODULE_DIAMETER_MAX: float,
    NODULES_PER_IMAGE: int,
    WORKERS: int,
}
SHAPE_GAN_SETTINGS = {
    LATENT_DIM: int,
    PROJECTION_CHANNELS: int,
    EPOCHS: int,
    BATCH_SIZE: int,
    LR_GENERATOR: float,
    LR_DISCRIMINATOR: float,
    BETA1: float,
    BETA2: float,
    NORMALIZED_DIAMETER: float,
    TRAINING_CANVAS: int,
    OUTPUT_SIZE: int,
    BINARIZE_THRESHOLD: float,
    CHECKPOINT_EVERY: int,
}
TEXTURE_GAN_SETTINGS = {
    PATCH_SIZE: int,
    BASE_CHANNELS: int,
    STAGES: int,
    CONDITION: str,
    BATCH_SIZE: int,
    LR_PHASE1: float,
    LR_PHASE2: float,
    DISCRIMINATOR_LR_RATIO: float,
    DISCRIMINATOR_CHANNELS: int,
    BETA1: float,
    BETA2: float,
    WEIGHT_REC1: float,
    WEIGHT_REC2: float,
    WEIGHT_PERC: float,
    WEIGHT_ADV: float,
    MAX_EPOCHS_PER_PHASE: int,
    MAX_STEPS_PER_PHASE: int,
    PLATEAU_PATIENCE: int,
    PLATEAU_TOLERANCE: float,
    PADDING_MODE: str,
    PRETRAINED_EXTRACTOR: bool,
    CHECKPOINT_EVERY: int,
    LOG_EVERY: int,
}
DETECTOR_SETTINGS = {
    INPUT_SIZE: int,
    BASE_CHANNELS: int,
    BATCH_SIZE: int,
    PRETRAIN_LR: float,
    PRETRAIN_EPOCHS: int,
    FINETUNE_LR: float,
    FINETUNE_EPOCHS: int,
    MAX_DETECTIONS: int,
    MIN_SCORE: float,
    HEATMAP_SIGMA: float,
    SHIFT_RANGE: int,
    SHIFT_PROBABILITY: float,
    FLIP_PROBABILITY: float,
    LOG_EVERY: int,
}
AUGMENT_SETTINGS = {
    N: int,
    SAMPLING: str,
    IOU_THRESHOLD: float,
    OPERATING_FP_RATE: float,
    CONF_THRESHOLD: float,
    COMPOSITE: bool,
    RETRY_CAP: int,
    HISTOGRAM_BINS: int,
    FP_MAX: float,
}
EVAL_SETTINGS = {FP_MAX: float, IOU_THRESHOLD: float, CONF_THRESHOLD: float}
SETTINGS = {
    GLOBAL: GLOBAL_SETTINGS,
    PHANTOM: PHANTOM_SETTINGS,
    SHAPE_GAN: SHAPE_GAN_SETTINGS,
    TEXTURE_GAN: TEXTURE_GAN_SETTINGS,
    DETECTOR: DETECTOR_SETTINGS,
    AUGMENT: AUGMENT_SETTINGS,
    EVAL: EVAL_SETTINGS,
}
CHOICES = {
    (TEXTURE_GAN, CONDITION): CONDITIONS,
    (TEXTURE_GAN, PADDING_MODE): PADDING_MODES,
    (AUGMENT, SAMPLING): SAMPLING_STRATEGIES,
}


def getDefaultGlobalConfig():
    return {DEVICE: "cpu", SEED: 0}


def getDefaultPhantomConfig():
    return {
        IMAGE_SIZE: 1024,
        RIB_COUNT: 9,
        RIB_AMPLITUDE: 0.06,
        RIB_CURVATURE: 0.35,
        LUNG_OFFSET_X: 0.22,
        LUNG_CENTER_Y: 0.48,
        LUNG_SEMI_X: 0.17,
        LUNG_SEMI_Y: 0.32,
        LUNG_ATTENUATION: 0.3,
        NOISE_SIGMA: 0.01,
        NODULE_AMPLITUDE_MIN: 0.1,
        NODULE_AMPLITUDE_MAX: 0.2,
        NODULE_SIGMA_FACTOR: 0.8,
        FOURIER_ORDER: 3,
        FOURIER_AMPLITUDE: 0.12,
        NODULE_DIAMETER_MIN: 14.0,
        NODULE_DIAMETER_MAX: 60.0,
        NODULES_PER_IMAGE: 1,
        WORKERS: 4,
    }


def getDefaultShapeGanConfig():
    return {
        LATENT_DIM: 100,
        PROJECTION_CHANNELS: 512,
        EPOCHS: 1000,
        BATCH_SIZE: 6,
        LR_GENERATOR: 1e-4,
        LR_DISCRIMINATOR: 1e-5,
        BETA1: 0.5,
        BETA2: 0.999,
        NORMALIZED_DIAMETER: 100.0,
        TRAINING_CANVAS: 256,
        OUTPUT_SIZE: 128,
        BINARIZE_THRESHOLD: 0.5,
        CHECKPOINT_EVERY: 100,
    }


def getDefaultTextureGanConfig():
    return {
        PATCH_SIZE: 256,
        BASE_CHANNELS: 48,
        STAGES: 2,
        CONDITION: "shape",
        BATCH_SIZE: 8,
        LR_PHASE1: 1e-4,
        LR_PHASE2: 1e-5,
        DISCRIMINATOR_LR_RATIO: 0.1,
        DISCRIMINATOR_CHANNELS: 64,
        BETA1: 0.5,
        BETA2: 0.999,
        WEIGHT_REC1: 1.0,
        WEIGHT_REC2: 1.0,
        WEIGHT_PERC: 1.0,
        WEIGHT_ADV: 1.0,
        MAX_EPOCHS_PER_PHASE: 200,
        MAX_STEPS_PER_PHASE: 0,
        PLATEAU_PATIENCE: 10,
        PLATEAU_TOLERANCE: 0.01,
        PADDING_MODE: "zeros",
        PRETRAINED_EXTRACTOR: True,
        CHECKPOINT_EVERY: 1000,
        LOG_EVERY: 50,
    }


def getDefaultDetectorConfig():
    return {
        INPUT_SIZE: 256,
        BASE_CHANNELS: 16,
        BATCH_SIZE: 8,
        PRETRAIN_LR: 1e-3,
        PRETRAIN_EPOCHS: 20,
        FINETUNE_LR: 1e-4,
        FINETUNE_EPOCHS: 10,
        MAX_DETECTIONS: 10,
        MIN_SCORE: 0.05,
        HEATMAP_SIGMA: 1.5,
        SHIFT_RANGE: 32,
        SHIFT_PROBABILITY: 0.5,
        FLIP_PROBABILITY: 0.5,
        LOG_EVERY: 10,
    }


def getDefaultAugmentConfig():
    # conf-threshold <= 0 selects the operating-fp-rate point on the mining set
    return {
        N: 200,
        SAMPLING: "hem",
        IOU_THRESHOLD: 0.2,
        OPERATING_FP_RATE: 0.25,
        CONF_THRESHOLD: 0.0,
        COMPOSITE: True,
        RETRY_CAP: 50,
        HISTOGRAM_BINS: 10,
        FP_MAX: 1.0,
    }


def getDefaultEvalConfig():
    return {FP_MAX: 1.0, IOU_THRESHOLD: 0.2, CONF_THRESHOLD: 0.5}


DEFAULTS = {
    GLOBAL: getDefaultGlobalConfig,
    PHANTOM: getDefaultPhantomConfig,
    SHAPE_GAN: getDefaultShapeGanConfig,
    TEXTURE_GAN: getDefaultTextureGanConfig,
    DETECTOR: getDefaultDetectorConfig,
    AUGMENT: getDefaultAugmentConfig,
    EVAL: getDefaultEvalConfig,
}


def getDefaultConfig():
    return {section: getDefault() for section, getDefault in DEFAULTS.items()}


def withDefaults(section, settings=None):
    config = DEFAULTS[section]()
    for key, value in (settings or {}).items():
        config[key] = verifySetting(section, key, value)
    return config


def keyPathOf(section, key):
    return key if section == GLOBAL else f"{section}.{key}"


def verifySetting(section, key, value):
    settings = SETTINGS[section]
    keyPath = keyPathOf(section, key)
    if key not in settings:
        raise ConfigException("is not a valid setting", keyPath)
    expectedType = settings[key]
    actualType = type(value)
    if expectedType == float and actualType == int:
        value = float(value)
    elif expectedType != actualType:
        raise ConfigException(
            f"should be of type: {expectedType.__name__}", keyPath
        )
    choices = CHOICES.get((section, key))
    if choices and value not in choices:
        raise ConfigException(f"should be one of: {', '.join(choices)}", keyPath)
    return value


def mergeSettings(config, data):
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SETTINGS or key == GLOBAL:
                raise ConfigException("is not a valid section", key)
            for sectionKey, sectionValue in value.items():
                config[key][sectionKey] = verifySetting(key, sectionKey, sectionValue)
            continue
        config[GLOBAL][key] = verifySetting(GLOBAL, key, value)
    return config


def loadConfig(configFilePath=None):
    config = getDefaultConfig()
    if not configFilePath:
        return config
    try:
        with open(configFilePath, "rb") as configFile:
            data = tomllib.load(configFile)
    except tomllib.TOMLDecodeError as decodeError:
        raise ConfigException(f"invalid TOML in {configFilePath}: {decodeError}")
    return mergeSettings(config, data)


def parseOverride(override):
    if "=" not in override:
        raise ConfigException(f"override: {override}, should look like key=value")
    keyPath, rawValue = override.split("=", 1)
    keyPath = keyPath.strip()
    try:
        value = tomllib.loads(f"value = {rawValue.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        # bare words are strings
        value = rawValue.strip()
    if "." in keyPath:
        section, key = keyPath.split(".", 1)
        return {section: {key: value}}
    return {keyPath: value}


def applyOverrides(config, overrides):
    for override in overrides or ():
        mergeSettings(config, parseOverride(override))
    return config


def getDefaultConfigFilePath():
    configDirPath = user_config_dir(PROGRAM_DIR_NAME)
    return os.path.join(configDirPath, f"{PROGRAM_DIR_NAME}.toml")


def getCacheDir(config=None):
    cacheDir = os.environ.get(CACHE_ENV_VAR)
    if cacheDir:
        return cacheDir
    if config and CACHE_DIR in config[GLOBAL]:
        return os.path.expanduser(config[GLOBAL][CACHE_DIR])
    return user_cache_dir(PROGRAM_DIR_NAME)
