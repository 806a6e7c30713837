import numpy as np
import torch

# images rest in [0, 1]; every network sees [-1, 1]


def toModelRange(pixels):
    if isinstance(pixels, torch.Tensor):
        return pixels * 2 - 1
    return np.asarray(pixels, dtype=np.float64) * 2 - 1


def fromModelRange(pixels):
    if isinstance(pixels, torch.Tensor):
        return ((pixels + 1) / 2).clamp(0, 1)
    return np.clip((np.asarray(pixels, dtype=np.float64) + 1) / 2, 0, 1)
