"""Image-based lighting renderer and LDR background compositing.

Foreground pixels integrate the environment map by direct summation over all
texels (no sampling noise, fully deterministic):

    L_o(wo) = sum_t  f(mat, wi_t, wo, n) * env(t) * max(0, n . wi_t) * dw_t

Background pixels look the environment up along the camera ray. The
environment resolution is capped at 64x32 so the full summation stays cheap.
"""

import numpy as np

from scipy import ndimage

from . import color
from . import gbuffer as gbuffer_mod
from . import materials as materials_mod
from . import sphere
from .errors import ConfigError, ShapeError

MAX_ENV_HEIGHT = 32
_CHUNK = 1024


def _env_lookup(env, dirs):
    """Radiance of the env texel each unit direction falls in."""
    h, w = env.shape[:2]
    u, v = sphere.dir_to_texel(dirs, w, h)
    return env[v, u]


def render_ibl(g, mats, env):
    """Render a GBuffer under an environment map. Returns (H, W, 3) HDR.

    mats is a sequence of Material indexed by the buffer's labels; every
    label present in the buffer must have one. Background pixels show the
    environment along the camera ray.
    """
    env = sphere.validate_envmap(np.asarray(env, dtype=np.float64))
    if env.shape[0] > MAX_ENV_HEIGHT:
        raise ConfigError(
            f"environment height {env.shape[0]} exceeds the {MAX_ENV_HEIGHT} cap"
        )
    if g.width != g.height:
        raise ShapeError("rendering expects a square GBuffer")
    n_labels = g.n_labels
    if n_labels > len(mats):
        raise ConfigError(
            f"buffer has {n_labels} labels but only {len(mats)} materials"
        )

    eh, ew = env.shape[:2]
    rays = gbuffer_mod.camera_rays(g.width).reshape(-1, 3)
    out = np.zeros((g.height * g.width, 3))
    fg = g.fg_mask.reshape(-1)
    out[~fg] = _env_lookup(env, rays[~fg])

    wi = sphere.texel_grid_dirs(ew, eh).reshape(-1, 3)
    dw = np.repeat(sphere.row_solid_angles(ew, eh), ew)
    env_dw = env.reshape(-1, 3) * dw[:, None]

    normals = g.normal.reshape(-1, 3)
    matid = g.material_id.reshape(-1)
    for label in range(n_labels):
        mat = mats[label]
        px = np.flatnonzero(fg & (matid == label))
        for start in range(0, len(px), _CHUNK):
            idx = px[start : start + _CHUNK]
            n = normals[idx]
            cosm = np.clip(n @ wi.T, 0.0, None)  # (P, T)
            shade = cosm @ env_dw * (mat.diffuse_albedo / np.pi)
            if mat.model == materials_mod.MODEL_BLINN:
                wo = -rays[idx]
                h = wi[None, :, :] + wo[:, None, :]
                hn = np.linalg.norm(h, axis=-1)
                ndh = np.clip(
                    np.einsum("pj,ptj->pt", n, h) / np.where(hn > 1e-12, hn, 1.0),
                    0.0,
                    None,
                )
                e = mat.exponent
                lobe = (e + 2.0) / (2.0 * np.pi) * ndh ** e
                shade = shade + (lobe * cosm) @ env_dw * mat.specular_albedo
            out[idx] = shade
    return out.reshape(g.height, g.width, 3)


def masked_blur(img, mask, sigma=2.0, truncate=3.0):
    """Gaussian blur restricted to mask > 0 pixels (normalized convolution).

    The kernel is a discrete Gaussian truncated at truncate*sigma; weights
    renormalize at mask and image edges so valid pixels never darken. Pixels
    with no valid neighbor in reach come back as 0.
    """
    img = np.asarray(img, dtype=np.float64)
    w = np.asarray(mask, dtype=np.float64)
    num = ndimage.gaussian_filter(
        img * w[..., None], sigma=(sigma, sigma, 0), truncate=truncate, mode="constant"
    )
    den = ndimage.gaussian_filter(w, sigma=sigma, truncate=truncate, mode="constant")
    safe = den > 1e-12
    return np.where(safe[..., None], num / np.where(safe, den, 1.0)[..., None], 0.0)


def area_resize(img, out_h, out_w):
    """Exact box (area-average) resize using interval-overlap weights.

    Handles any integer size ratio, up or down; constant images stay
    constant bit-for-bit up to float rounding.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    wr = sphere._overlap_lin_weights(h, out_h)
    wc = sphere._overlap_lin_weights(w, out_w)
    wr = wr / wr.sum(axis=1, keepdims=True)
    wc = wc / wc.sum(axis=1, keepdims=True)
    return np.einsum("qr,rjc,ij->qic", wr, img, wc)


def composite_background(env, g, out_size=128):
    """LDR background image for a view: the tone-mapped environment seen
    along the camera rays, with the foreground blacked out, blurred
    (sigma=2, truncated at 3 sigma, mask-renormalized) and box-resized.

    The exposure is anchored on the environment's own 0.90-percentile
    luminance, matching how rendered images of the same scene are mapped.
    """
    env = sphere.validate_envmap(np.asarray(env, dtype=np.float64))
    rays = gbuffer_mod.camera_rays(g.width)
    bg_hdr = _env_lookup(env, rays)
    ldr, _ = tonemap_for_env(bg_hdr, env)
    ldr[g.fg_mask] = 0.0
    blurred = masked_blur(ldr, ~g.fg_mask)
    return area_resize(blurred, out_size, out_size)


def tonemap_for_env(img_hdr, env):
    """Tone-map an HDR rendering with exposure anchored on its environment."""
    return color.tonemap_percentile(img_hdr, anchor=env)
