"""Partial reflectance maps: extraction from (image, GBuffer) pairs.

A reflectance map stores the LDR appearance of one material as a function of
surface orientation on a square 128x128 lat-long grid. Only camera-facing
orientations (direction z > 0, the middle half of the columns) can ever be
observed; texels nobody observed are exactly black with mask false.
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import color, imageio, render, sphere
from .errors import ShapeError

REFMAP_SIZE = 128


def front_hemisphere_mask(size=REFMAP_SIZE):
    """Boolean (size, size) grid of texels whose direction has z > 0."""
    dirs = sphere.texel_grid_dirs(size, size)
    return dirs[..., 2] > 0.0


@dataclass
class RefMap:
    """LDR appearance by orientation, with an observation mask."""

    pixels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        s = REFMAP_SIZE
        if self.pixels.shape != (s, s, 3) or self.mask.shape != (s, s):
            raise ShapeError(
                f"refmap must be ({s}, {s}, 3) with ({s}, {s}) mask, "
                f"got {self.pixels.shape} / {self.mask.shape}"
            )
        if np.any(self.pixels < 0.0) or np.any(self.pixels > 1.0):
            raise ShapeError("refmap pixels must lie in [0, 1]")
        if np.any(self.pixels[~self.mask] != 0.0):
            raise ShapeError("unobserved refmap texels must be exactly black")
        if np.any(self.mask & ~front_hemisphere_mask()):
            raise ShapeError("observed texels must lie in the front hemisphere")


def empty_refmap():
    s = REFMAP_SIZE
    return RefMap(np.zeros((s, s, 3)), np.zeros((s, s), dtype=bool))


def extract_refmap(img, g, material):
    """Average image pixels of one material into an orientation-indexed map.

    Every foreground pixel with the given label and a camera-facing normal
    contributes to the texel its normal maps to; contributors are averaged
    in linear RGB and re-encoded. Row-major accumulation order keeps the
    result bit-deterministic. A label absent from the buffer yields an
    empty map with a warning.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] != (g.height, g.width):
        raise ShapeError(
            f"image {img.shape[:2]} does not match buffer {(g.height, g.width)}"
        )
    sel = g.fg_mask & (g.material_id == material)
    if not sel.any():
        warnings.warn(f"material label {material} absent from buffer; empty refmap")
        return empty_refmap()
    normals = g.normal[sel]
    values = color.srgb_decode(img[sel])
    keep = normals[:, 2] > 0.0
    if not keep.any():
        warnings.warn(f"material label {material} has no camera-facing pixels")
        return empty_refmap()
    s = REFMAP_SIZE
    u, v = sphere.dir_to_texel(normals[keep], s, s)
    sums = np.zeros((s, s, 3))
    counts = np.zeros((s, s), dtype=np.int64)
    np.add.at(sums, (v, u), values[keep])
    np.add.at(counts, (v, u), 1)
    mask = counts > 0
    mean = np.where(mask[..., None], sums / np.maximum(counts, 1)[..., None], 0.0)
    pixels = np.where(mask[..., None], color.srgb_encode(np.clip(mean, 0.0, 1.0)), 0.0)
    return RefMap(pixels, mask)


def coverage(r):
    """Observed fraction of the front hemisphere, in [0, 1]."""
    front = front_hemisphere_mask()
    return float(r.mask.sum() / front.sum())


def extract_background(img, g, out_size=128):
    """Background image: foreground blacked out, masked Gaussian blur
    (sigma=2, truncated at 3 sigma), box-resized to out_size."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] != (g.height, g.width):
        raise ShapeError(
            f"image {img.shape[:2]} does not match buffer {(g.height, g.width)}"
        )
    work = img.copy()
    work[g.fg_mask] = 0.0
    blurred = render.masked_blur(work, ~g.fg_mask)
    return render.area_resize(blurred, out_size, out_size)


def save_refmap(r, out_dir, stem):
    """Write the PNG pair <stem>.refmap.png / <stem>.refmask.png."""
    imageio.write_png(os.path.join(out_dir, f"{stem}.refmap.png"), r.pixels)
    imageio.write_mask_png(os.path.join(out_dir, f"{stem}.refmask.png"), r.mask)


def load_refmap(in_dir, stem):
    pixels = imageio.read_png(os.path.join(in_dir, f"{stem}.refmap.png"))
    mask = imageio.read_mask_png(os.path.join(in_dir, f"{stem}.refmask.png"))
    return RefMap(np.where(mask[..., None], pixels, 0.0), mask)


def save_background(bg, out_dir, stem):
    imageio.write_png(os.path.join(out_dir, f"{stem}.bg.png"), bg)


def load_background(in_dir, stem):
    return imageio.read_png(os.path.join(in_dir, f"{stem}.bg.png"))
