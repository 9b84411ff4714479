"""Evaluation protocol: structural-dissimilarity scoring of HDR environment
maps under a ground-truth-anchored tone mapping, dominant-light localization,
and luminance histograms.

The HDR protocol mirrors how the maps are consumed: the reference exposure
comes from the ground truth's 0.90-percentile luminance, the same exposure
tone-maps every candidate, and scores are computed on the resulting LDR
images. Scaling prediction and ground truth by one common factor therefore
cannot change any score.
"""

import numpy as np
from scipy.ndimage import correlate1d

from . import color, sphere
from .errors import DataError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
ANCHOR_PERCENTILE = 0.90


def _gauss1d():
    r = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


_KERNEL = _gauss1d()


def _windowed(img):
    """Gaussian-weighted local means over the valid (un-padded) region."""
    out = correlate1d(img, _KERNEL, axis=0, mode="constant")
    out = correlate1d(out, _KERNEL, axis=1, mode="constant")
    h = SSIM_WINDOW // 2
    return out[h:-h, h:-h]


def _ssim_channel(a, b):
    mu_a = _windowed(a)
    mu_b = _windowed(b)
    var_a = _windowed(a * a) - mu_a * mu_a
    var_b = _windowed(b * b) - mu_b * mu_b
    cov = _windowed(a * b) - mu_a * mu_b
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b):
    """Mean SSIM between two equally sized LDR images (dynamic range 1).

    11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, evaluated on the
    valid region only and averaged over channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim inputs differ in shape: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.ndim != 3:
        raise ShapeError(f"ssim wants (H, W) or (H, W, C) images, got {a.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ShapeError(
            f"image {a.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW}"
            f" window"
        )
    return float(
        np.mean([_ssim_channel(a[..., c], b[..., c]) for c in range(a.shape[2])])
    )


def dssim(a, b):
    """Structural dissimilarity (1 - SSIM) / 2, in [0, 1]."""
    return (1.0 - ssim(a, b)) / 2.0


def _check_hdr(m, what):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 3 or m.shape[2] != 3:
        raise ShapeError(f"{what} must be (H, W, 3), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{what} contains non-finite values")
    if np.any(m < 0.0):
        raise DataError(f"{what} contains negative radiance")
    return m


def _to_gt_grid(pred, gt):
    if pred.shape != gt.shape:
        pred = sphere.resample_env(pred, gt.shape[1], gt.shape[0])
    return pred


def eval_pair(pred, gt):
    """Protocol score of one HDR prediction against its HDR ground truth.

    The prediction is resampled to the ground truth's grid if needed, both
    maps are tone-mapped with the exposure anchored on the ground truth's
    0.90-percentile luminance, and the LDR pair is scored with dssim.
    """
    gt = _check_hdr(gt, "ground truth")
    sphere.validate_envmap(gt)
    pred = _to_gt_grid(_check_hdr(pred, "prediction"), gt)
    ldr_gt, _ = color.tonemap_percentile(gt, ANCHOR_PERCENTILE)
    ldr_pred, _ = color.tonemap_percentile(pred, ANCHOR_PERCENTILE, anchor=gt)
    return dssim(ldr_pred, ldr_gt)


def dominant_light_distance(pred, gt):
    """Texel distance between the brightest texels of prediction and truth.

    Both argmaxes break ties toward the lowest (row, column). The distance
    is Euclidean in texel units with the column axis wrapped (the map is
    periodic in azimuth) and the row axis clamped.
    """
    gt = _check_hdr(gt, "ground truth")
    sphere.validate_envmap(gt)
    pred = _to_gt_grid(_check_hdr(pred, "prediction"), gt)
    lum_p = color.luminance(pred)
    lum_g = color.luminance(gt)
    vp, up = np.unravel_index(int(np.argmax(lum_p)), lum_p.shape)
    vg, ug = np.unravel_index(int(np.argmax(lum_g)), lum_g.shape)
    width = gt.shape[1]
    du = abs(int(up) - int(ug))
    du = min(du, width - du)
    dv = abs(int(vp) - int(vg))
    return float(np.hypot(du, dv))


def luminance_histograms(preds, gts, n_bins=48, floor=1e-6):
    """Histogram the HDR luminances of predictions and ground truths over one
    shared set of log-spaced bins.

    Predictions are resampled to their ground truth's grid first, so both
    histograms count the same number of texels (equal total mass). Values are
    clamped into the bin range; all-dark maps land in the first bin.

    Returns (bin_edges, pred_counts, gt_counts).
    """
    if not preds or not gts or len(preds) != len(gts):
        raise DataError(
            f"histograms need equally many predictions and ground truths, "
            f"got {len(preds)} and {len(gts)}"
        )
    lp = []
    lg = []
    for pred, gt in zip(preds, gts):
        gt = _check_hdr(gt, "ground truth")
        sphere.validate_envmap(gt)
        pred = _to_gt_grid(_check_hdr(pred, "prediction"), gt)
        lp.append(color.luminance(pred).ravel())
        lg.append(color.luminance(gt).ravel())
    lp = np.concatenate(lp)
    lg = np.concatenate(lg)
    hi = max(float(lp.max()), float(lg.max()), floor * 10.0)
    edges = np.geomspace(floor, hi, n_bins + 1)
    pred_counts, _ = np.histogram(np.clip(lp, floor, hi), bins=edges)
    gt_counts, _ = np.histogram(np.clip(lg, floor, hi), bins=edges)
    return edges, pred_counts, gt_counts
