"""Color-space conversions, log-radiance compression, and tone mapping.

All images are numpy arrays with channels last. LDR images hold sRGB-encoded
values in [0, 1]; HDR images hold linear radiance >= 0. The log-Lab space
used by the training loss compresses radiance with ln(1+x)/ln(1+x_ref) per
channel and then converts the resulting [0, 1] RGB to CIE 1976 L*a*b*
(D65 white, sRGB primaries).
"""

import warnings

import numpy as np

from .errors import ConfigError, DegenerateExposureError

# Rec.709 / sRGB primaries, D65 white point
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = _RGB_TO_XYZ @ np.ones(3)

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

DEFAULT_LOG_ANCHOR = 64.0


def _clip_warn(c, name):
    c = np.asarray(c, dtype=np.float64)
    if np.any(c < 0) or np.any(c > 1):
        warnings.warn(f"{name}: values outside [0, 1] clamped", stacklevel=3)
        c = np.clip(c, 0.0, 1.0)
    return c


def srgb_decode(c):
    """sRGB-encoded [0, 1] -> linear [0, 1] (standard EOTF)."""
    c = _clip_warn(c, "srgb_decode")
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def srgb_encode(c):
    """Linear [0, 1] -> sRGB-encoded [0, 1]."""
    c = _clip_warn(c, "srgb_encode")
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * np.maximum(c, 0.0) ** (1 / 2.4) - 0.055)


def _lab_f(t):
    d = 6.0 / 29.0
    return np.where(t > d**3, np.cbrt(t), t / (3 * d * d) + 4.0 / 29.0)


def _lab_finv(t):
    d = 6.0 / 29.0
    return np.where(t > d, t**3, 3 * d * d * (t - 4.0 / 29.0))


def linear_to_lab(rgb):
    """Linear RGB in [0, 1] (channels last) -> CIE L*a*b*, D65 white."""
    rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    xyz = rgb @ _RGB_TO_XYZ.T
    fxyz = _lab_f(xyz / _WHITE)
    fx, fy, fz = fxyz[..., 0], fxyz[..., 1], fxyz[..., 2]
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_linear(lab):
    """CIE L*a*b* -> linear RGB clamped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    l, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (l + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_lab_finv(fx), _lab_finv(fy), _lab_finv(fz)], axis=-1) * _WHITE
    return np.clip(xyz @ _XYZ_TO_RGB.T, 0.0, 1.0)


def log_map(x, x_ref=DEFAULT_LOG_ANCHOR):
    """Compress linear radiance >= 0 to [0, 1]: ln(1+x)/ln(1+x_ref)."""
    if x_ref <= 0:
        raise ConfigError(f"log anchor must be positive, got {x_ref}")
    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    return np.clip(np.log1p(x) / np.log1p(x_ref), 0.0, 1.0)


def log_unmap(y, x_ref=DEFAULT_LOG_ANCHOR):
    """Inverse of log_map on [0, 1]: expm1(y * ln(1+x_ref))."""
    if x_ref <= 0:
        raise ConfigError(f"log anchor must be positive, got {x_ref}")
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, 1.0)
    return np.expm1(y * np.log1p(x_ref))


def to_loglab(hdr, x_ref=DEFAULT_LOG_ANCHOR):
    """HDR radiance image -> log-Lab: per-channel log_map, then Lab."""
    return linear_to_lab(log_map(hdr, x_ref))


def from_loglab(loglab, x_ref=DEFAULT_LOG_ANCHOR):
    """Log-Lab image -> non-negative HDR radiance (<= x_ref per channel)."""
    return log_unmap(lab_to_linear(loglab), x_ref)


def luminance(rgb):
    """Rec.709 luminance of a linear RGB image (channels last)."""
    return np.asarray(rgb, dtype=np.float64) @ LUMA_WEIGHTS


def percentile_nearest_rank(values, p):
    """Nearest-rank percentile of a flat collection: sorted[ceil(p*n) - 1]."""
    flat = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if flat.size == 0:
        raise ConfigError("percentile of empty collection")
    rank = int(np.ceil(p * flat.size)) - 1
    return flat[np.clip(rank, 0, flat.size - 1)]


def tonemap_percentile(hdr, p=0.90, anchor=None):
    """Exposure-anchored tone mapping of an HDR image to sRGB LDR.

    The exposure 1 / percentile_p(luminance) is taken from `anchor` when
    given (the authoritative source, e.g. a ground-truth map), otherwise
    from `hdr` itself. Returns (ldr, exposure).
    """
    hdr = np.asarray(hdr, dtype=np.float64)
    if hdr.size == 0:
        raise ConfigError("cannot tone-map an empty image")
    src = hdr if anchor is None else np.asarray(anchor, dtype=np.float64)
    ref = percentile_nearest_rank(luminance(src), p)
    if ref <= 0.0:
        raise DegenerateExposureError(
            f"anchor {p:.2f}-percentile luminance is {ref}; cannot set exposure"
        )
    exposure = 1.0 / ref
    ldr = srgb_encode(np.clip(exposure * hdr, 0.0, 1.0))
    return ldr, exposure
