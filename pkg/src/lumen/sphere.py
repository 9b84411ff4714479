"""Direction/texel geometry of the latitude-longitude sphere.

Conventions (global across the package):
  * y is up, z points toward the viewer in camera space.
  * A lat-long image of size (height, width) maps row v to polar angle
    theta = acos(y) in [0, pi] (row 0 = zenith) and column u to azimuth
    phi = atan2(x, z) in (-pi, pi], with phi = 0 at column width/2.
  * Environment maps are (height, width, 3) float arrays with width =
    2 * height; reflectance maps reuse the same mapping on square grids.
"""

import numpy as np

from .errors import InvalidDirectionError, ShapeError

UNIT_TOL = 1e-3


def normalize(vec):
    """Return vec scaled to unit length along the last axis."""
    v = np.asarray(vec, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


def _check_unit(d):
    n = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_TOL):
        raise InvalidDirectionError(
            f"direction norm deviates from 1 by more than {UNIT_TOL}"
        )


def dir_to_texel(d, width, height):
    """Map unit direction(s) to integer texel indices (u, v).

    u = floor(frac(atan2(x, z) / 2pi + 0.5) * width)
    v = floor(clamp(acos(y) / pi, 0, 1-eps) * height)

    Accepts a single direction (3,) or an array (..., 3); returns int arrays.
    """
    d = np.asarray(d, dtype=np.float64)
    _check_unit(d)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    phi = np.arctan2(x, z)
    u_frac = np.mod(phi / (2.0 * np.pi) + 0.5, 1.0)
    u = np.floor(u_frac * width).astype(np.int64)
    # mod can return exactly 1.0 for phi just below -pi
    u = np.minimum(u, width - 1)
    theta_frac = np.clip(np.arccos(np.clip(y, -1.0, 1.0)) / np.pi, 0.0, 1.0 - 1e-12)
    v = np.floor(theta_frac * height).astype(np.int64)
    return u, v


def texel_to_dir(u, v, width, height):
    """Direction of the texel-center for indices (u, v); inverse of dir_to_texel."""
    u = np.asarray(u)
    v = np.asarray(v)
    if np.any(u < 0) or np.any(u >= width) or np.any(v < 0) or np.any(v >= height):
        raise IndexError(f"texel index out of range for {width}x{height}")
    theta = (v + 0.5) * np.pi / height
    phi = ((u + 0.5) / width - 0.5) * 2.0 * np.pi
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def texel_grid_dirs(width, height):
    """(height, width, 3) array of texel-center directions."""
    uu, vv = np.meshgrid(np.arange(width), np.arange(height))
    return texel_to_dir(uu, vv, width, height)


def texel_solid_angle(v, width, height):
    """Solid angle in steradians of any texel in row v.

    Exact cosine-difference form so the sum over a full map telescopes to 4pi.
    """
    v = np.asarray(v)
    if np.any(v < 0) or np.any(v >= height):
        raise IndexError(f"row index out of range for height {height}")
    return (2.0 * np.pi / width) * (
        np.cos(v * np.pi / height) - np.cos((v + 1) * np.pi / height)
    )


def row_solid_angles(width, height):
    """Per-row texel solid angles, shape (height,)."""
    return texel_solid_angle(np.arange(height), width, height)


def reflect(view, normal):
    """Mirror `view` about `normal`: r = 2 (n.v) n - v. Both inputs unit."""
    v = np.asarray(view, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    _check_unit(v)
    _check_unit(n)
    ndv = np.sum(n * v, axis=-1, keepdims=True)
    return 2.0 * ndv * n - v


def rotate_y(envmap, shift):
    """Rotate a lat-long map about the y axis by a whole-texel column shift.

    Positive shift moves content toward larger u (larger azimuth). Lossless:
    a circular roll of the columns.
    """
    m = np.asarray(envmap)
    return np.roll(m, int(shift), axis=1)


def validate_envmap(envmap):
    """Check the environment-map contract: (H, 2H, 3), finite, non-negative."""
    m = np.asarray(envmap)
    if m.ndim != 3 or m.shape[2] != 3:
        raise ShapeError(f"environment map must be (H, W, 3), got {m.shape}")
    h, w = m.shape[:2]
    if w != 2 * h:
        raise ShapeError(f"environment map must have width = 2*height, got {w}x{h}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise ShapeError("environment map must be finite and non-negative")
    return m


def _overlap_cos_weights(n_src, n_dst):
    """(n_dst, n_src) matrix of solid-angle overlap weights between row ranges.

    Row r of the source covers theta in [r, r+1]*pi/n_src; weight of the
    overlap with destination row q is cos(a) - cos(b) over the shared range.
    """
    w = np.zeros((n_dst, n_src))
    src_edges = np.arange(n_src + 1) * np.pi / n_src
    dst_edges = np.arange(n_dst + 1) * np.pi / n_dst
    for q in range(n_dst):
        lo = np.maximum(src_edges[:-1], dst_edges[q])
        hi = np.minimum(src_edges[1:], dst_edges[q + 1])
        valid = hi > lo
        w[q, valid] = np.cos(lo[valid]) - np.cos(hi[valid])
    return w


def _overlap_lin_weights(n_src, n_dst):
    """(n_dst, n_src) overlap lengths between uniform azimuth ranges."""
    w = np.zeros((n_dst, n_src))
    src_edges = np.arange(n_src + 1) / n_src
    dst_edges = np.arange(n_dst + 1) / n_dst
    for q in range(n_dst):
        lo = np.maximum(src_edges[:-1], dst_edges[q])
        hi = np.minimum(src_edges[1:], dst_edges[q + 1])
        valid = hi > lo
        w[q, valid] = hi[valid] - lo[valid]
    return w


def resample_env(envmap, width, height):
    """Resample a lat-long map to (height, width) by solid-angle-weighted averaging.

    Exact piecewise-constant overlap integration in both axes: constant maps
    are preserved exactly and total flux (sum of radiance * solid angle) is
    conserved, so small bright lights keep their energy.
    """
    m = np.asarray(envmap, dtype=np.float64)
    if m.ndim != 3:
        raise ShapeError(f"expected (H, W, C) map, got {m.shape}")
    h, w = m.shape[:2]
    if (h, w) == (height, width):
        return m.copy()
    wt = _overlap_cos_weights(h, height)
    wp = _overlap_lin_weights(w, width)
    out = np.einsum("qr,rjc,ij->qic", wt, m, wp)
    norm = wt.sum(axis=1)[:, None] * wp.sum(axis=1)[None, :]
    return out / norm[..., None]
