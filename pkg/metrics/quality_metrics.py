import math
import numpy as np
import torch
from scipy import linalg
from skimage.metrics import structural_similarity
from geometry.geometry_error import EmptyMask
from geometry.mask_geometry import boundingBox, countForeground, toBinaryMask
from metrics.metrics_error import DimensionMismatch, SizeMismatch, TooFewSamples
from util.intensity import toModelRange

FULL_PATCH = "full_patch"
MASKED_REGION = "masked_region"
PEAK = 1.0
SSIM_SIGMA = 1.5
# gaussian window radius int(3.5 * 1.5 + 0.5) = 5
SSIM_WINDOW = 11
FID_BATCH = 16


class MetricReport:
    def __init__(self, scope, mae, psnr, ssim, fid=None, count=0):
        self.scope = scope
        self.mae = mae
        self.psnr = psnr
        self.ssim = ssim
        self.fid = fid
        self.count = count

    def isPsnrInfinite(self):
        return math.isinf(self.psnr)

    def toDict(self):
        return {
            "scope": self.scope,
            "mae": self.mae,
            "psnr": "inf" if self.isPsnrInfinite() else self.psnr,
            "ssim": self.ssim,
            "fid": self.fid,
            "count": self.count,
        }


def growWindow(low, high, minimum, limit):
    missing = minimum - (high - low)
    if missing <= 0:
        return low, high
    low = max(0, low - missing // 2)
    high = min(limit, low + minimum)
    return max(0, high - minimum), high


def ssimWindow(region):
    rowMin, colMin, rowMax, colMax = boundingBox(region)
    height, width = region.shape
    rowMin, rowMax = growWindow(rowMin, rowMax, SSIM_WINDOW, height)
    colMin, colMax = growWindow(colMin, colMax, SSIM_WINDOW, width)
    return slice(rowMin, rowMax), slice(colMin, colMax)


def pixelMetrics(a, b, region=None):
    """MAE, PSNR and SSIM of two [0, 1] patches.

    Without a region every pixel counts; with one, MAE and PSNR use the
    foreground pixels and SSIM the foreground bounding box (grown to the
    11x11 window when smaller).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise SizeMismatch(f"patches {a.shape} and {b.shape} must be equal 2D shapes")
    if min(a.shape) < SSIM_WINDOW:
        raise SizeMismatch(f"patches must be at least {SSIM_WINDOW} pixels per side, got {a.shape}")
    if region is None:
        region = np.ones(a.shape, dtype=np.uint8)
    region = toBinaryMask(region)
    if region.shape != a.shape:
        raise SizeMismatch(f"region {region.shape} does not match patches {a.shape}")
    if not countForeground(region):
        raise EmptyMask("metric region has no foreground pixels")
    difference = (a - b)[region > 0]
    mae = float(np.mean(np.abs(difference)))
    mse = float(np.mean(difference**2))
    psnr = math.inf if mse == 0 else 10 * math.log10(PEAK**2 / mse)
    window = ssimWindow(region)
    ssim = structural_similarity(
        a[window],
        b[window],
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        data_range=PEAK,
    )
    return {"mae": mae, "psnr": psnr, "ssim": float(ssim)}


def sqrtmPsd(matrix):
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    eigenvalues = np.clip(eigenvalues, 0, None)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def frechetDistance(mu1, sigma1, mu2, sigma2):
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=np.float64))
    dim = mu1.shape[0]
    if mu2.shape != (dim,) or sigma1.shape != (dim, dim) or sigma2.shape != (dim, dim):
        raise DimensionMismatch(
            f"means {mu1.shape}, {mu2.shape} and covariances {sigma1.shape}, {sigma2.shape} disagree"
        )
    # Tr((S1 S2)^1/2) = Tr((R S2 R)^1/2) with R = S1^1/2, a symmetric PSD product
    root1 = sqrtmPsd(sigma1)
    product = root1 @ sigma2 @ root1
    product = (product + product.T) / 2
    traceRoot = np.sum(np.sqrt(np.clip(linalg.eigvalsh(product), 0, None)))
    difference = mu1 - mu2
    return float(difference @ difference + np.trace(sigma1) + np.trace(sigma2) - 2 * traceRoot)


def pooledFeatures(images, extractor):
    device = next(extractor.buffers()).device
    features = []
    with torch.no_grad():
        for start in range(0, len(images), FID_BATCH):
            batch = np.stack(
                [toModelRange(np.asarray(image, dtype=np.float64)) for image in images[start : start + FID_BATCH]]
            )
            tensor = torch.as_tensor(batch, dtype=torch.float32, device=device).unsqueeze(1)
            lastTap = extractor(tensor)[-1]
            features.append(lastTap.mean(dim=(2, 3)).cpu().numpy().astype(np.float64))
    return np.concatenate(features)


def featureStatistics(features):
    return features.mean(axis=0), np.cov(features, rowvar=False)


def fidScore(imagesA, imagesB, extractor):
    for name, images in (("first", imagesA), ("second", imagesB)):
        if len(images) < 2:
            raise TooFewSamples(f"{name} image set has {len(images)} images, need at least 2")
    muA, sigmaA = featureStatistics(pooledFeatures(imagesA, extractor))
    muB, sigmaB = featureStatistics(pooledFeatures(imagesB, extractor))
    return frechetDistance(muA, sigmaA, muB, sigmaB)


def averageReport(scope, rows, fid):
    finitePsnrs = [row["psnr"] for row in rows if not math.isinf(row["psnr"])]
    psnr = float(np.mean(finitePsnrs)) if finitePsnrs else math.inf
    return MetricReport(
        scope,
        float(np.mean([row["mae"] for row in rows])),
        psnr,
        float(np.mean([row["ssim"] for row in rows])),
        fid,
        len(rows),
    )


def evaluatePatches(originals, synthesized, masks, extractor=None):
    if not len(originals) == len(synthesized) == len(masks):
        raise DimensionMismatch(
            f"{len(originals)} originals, {len(synthesized)} synthesized and {len(masks)} masks"
        )
    fullRows = [pixelMetrics(a, b) for a, b in zip(originals, synthesized)]
    maskedRows = [pixelMetrics(a, b, m) for a, b, m in zip(originals, synthesized, masks)]
    fullFid = maskedFid = None
    if extractor is not None:
        fullFid = fidScore(originals, synthesized, extractor)
        maskedA = [np.asarray(a) * toBinaryMask(m) for a, m in zip(originals, masks)]
        maskedB = [np.asarray(b) * toBinaryMask(m) for b, m in zip(synthesized, masks)]
        maskedFid = fidScore(maskedA, maskedB, extractor)
    return [
        averageReport(FULL_PATCH, fullRows, fullFid),
        averageReport(MASKED_REGION, maskedRows, maskedFid),
    ]
