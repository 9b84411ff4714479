"""HDR/LDR image file I/O: Portable Float Map (PFM) and 8-bit PNG.

PFM layout: header ``PF\\n<width> <height>\\n<scale>\\n`` followed by
height*width*3 little-endian f32 (negative scale), rows stored bottom to
top. Round trips are bit-exact.
"""

import numpy as np
from PIL import Image

from .errors import FormatError


def _read_token(f):
    # whitespace-delimited token, single trailing whitespace byte consumed
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise FormatError("unexpected end of PFM header")
        if c in b" \t\n\r":
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path):
    """Read a 3-channel PFM file into a float32 (H, W, 3) array, row 0 on top."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"PF":
            raise FormatError(f"{path}: not a color PFM file (magic {magic!r})")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM header") from e
        if width <= 0 or height <= 0 or scale == 0:
            raise FormatError(f"{path}: bad PFM dimensions or scale")
        count = width * height * 3
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError(f"{path}: truncated PFM payload")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(raw, dtype=dtype).reshape(height, width, 3)
    # bottom-to-top storage
    return np.flipud(data).astype(np.float32)


def write_pfm(path, image):
    """Write a (H, W, 3) float array as little-endian PFM."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PFM writer needs (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(img).astype("<f4").tobytes())


def read_png(path):
    """Read an 8-bit RGB PNG into a float64 (H, W, 3) array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_png(path, image):
    """Write a (H, W, 3) array in [0, 1] as 8-bit RGB PNG (round-half-up)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PNG writer needs (H, W, 3), got {img.shape}")
    q = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG")


def read_mask_png(path):
    """Read a PNG as a boolean mask (any channel > 127)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def write_mask_png(path, mask):
    """Write a boolean (H, W) mask as an 8-bit grayscale PNG."""
    m = np.asarray(mask, dtype=bool)
    Image.fromarray(np.where(m, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )
