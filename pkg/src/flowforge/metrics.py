"""Flow accuracy (EPE, Fl-all) and image fidelity (PSNR, SSIM)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, IndexingMismatchError, UndefinedMetricError
from .grid import FlowField, as_image, check_same_shape

FL_ABS_THRESHOLD = 3.0
FL_REL_THRESHOLD = 0.05

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
REC601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FlowMetrics:
    epe: float
    fl_all: float
    evaluated_pixels: int

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ImageMetrics:
    psnr: float
    ssim: float

    def as_dict(self):
        return asdict(self)


def _flow_errors(pred: FlowField, gt: FlowField, valid):
    if pred.indexing != gt.indexing:
        raise IndexingMismatchError(
            f"prediction is {pred.indexing.value}-indexed but ground truth is {gt.indexing.value}-indexed"
        )
    valid = np.asarray(valid, dtype=bool)
    check_same_shape(pred.data, gt.data, valid, names=("pred", "gt", "valid"))
    if not valid.any():
        raise UndefinedMetricError("flow metric over an empty mask")
    diff = pred.data[valid] - gt.data[valid]
    err = np.hypot(diff[:, 0], diff[:, 1])
    mag = np.hypot(gt.data[valid, 0], gt.data[valid, 1])
    return err, mag


def epe(pred: FlowField, gt: FlowField, valid) -> float:
    """Mean end-point error over ``valid`` pixels."""
    err, _ = _flow_errors(pred, gt, valid)
    return float(np.mean(err))


def outlier_mask(err, gt_mag):
    return (err > FL_ABS_THRESHOLD) & (err > FL_REL_THRESHOLD * gt_mag)


def fl_all(pred: FlowField, gt: FlowField, valid) -> float:
    """Percentage of valid pixels with error above 3 px and above 5% of the ground-truth magnitude."""
    err, mag = _flow_errors(pred, gt, valid)
    return 100.0 * float(np.mean(outlier_mask(err, mag)))


def flow_metrics(pred: FlowField, gt: FlowField, valid) -> FlowMetrics:
    err, mag = _flow_errors(pred, gt, valid)
    return FlowMetrics(float(np.mean(err)), 100.0 * float(np.mean(outlier_mask(err, mag))), int(err.size))


def psnr(a, b, peak=255.0, mask=None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs.

    With ``mask`` the mean squared error only covers the masked pixels.
    """
    a = as_image(a)
    b = as_image(b)
    check_same_shape(a, b, names=("a", "b"))
    if a.shape != b.shape:
        raise DimensionError(f"channel count differs: {a.shape} vs {b.shape}")
    sq = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise UndefinedMetricError("PSNR over an empty mask")
        sq = sq[mask]
    mse = float(np.mean(sq))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def to_luma(image) -> np.ndarray:
    img = as_image(image)
    if img.shape[2] == 1:
        return img[..., 0]
    if img.shape[2] != 3:
        raise DimensionError(f"cannot convert {img.shape[2]} channels to luma")
    return img @ REC601


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA) -> np.ndarray:
    r = size // 2
    g = np.exp(-(np.arange(-r, r + 1) ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x, g):
    # Separable 'valid' correlation with a symmetric 1-D kernel.
    k = g.size
    rows = sum(g[i] * x[i : x.shape[0] - k + 1 + i] for i in range(k))
    return sum(g[j] * rows[:, j : rows.shape[1] - k + 1 + j] for j in range(k))


def ssim_map(a, b, data_range=255.0) -> np.ndarray:
    """SSIM index for every fully-covered 11x11 Gaussian window."""
    x = to_luma(a)
    y = to_luma(b)
    if x.shape != y.shape:
        raise DimensionError(f"SSIM inputs differ in shape: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise DimensionError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x * mu_x
    syy = _filter_valid(y * y, g) - mu_y * mu_y
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b, data_range=255.0) -> float:
    """Mean single-scale SSIM (Gaussian window, sigma 1.5, K1=0.01, K2=0.03) on Rec.601 luma."""
    return float(np.mean(ssim_map(a, b, data_range)))


def image_metrics(a, b) -> ImageMetrics:
    return ImageMetrics(psnr(a, b), ssim(a, b))
