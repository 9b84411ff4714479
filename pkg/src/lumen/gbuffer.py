"""Per-pixel geometry buffers for procedural shapes.

The camera sits at the origin of camera space looking along -z (so +z points
from the scene back toward the viewer, matching the sphere conventions), with
a fixed 30 degree vertical field of view. Shapes are centered at
(0, 0, -camera_distance) and carry an orientation matrix that rotates the
object in camera space; rotating the object is equivalent to orbiting an
upright camera around it.

Shapes: sphere (analytic intersection), torus and superellipsoid (conservative
distance marching with bisection refinement, analytic normals at the hit).
"""

from dataclasses import dataclass

import numpy as np

from . import imageio
from .errors import ConfigError, ShapeError

FOV_DEG = 30.0
CAMERA_DISTANCE = 5.0

SHAPE_DEFAULTS = {
    "sphere": {"radius": 1.0},
    "torus": {"major_radius": 0.7, "minor_radius": 0.35},
    "superellipsoid": {"semi_axes": (0.9, 0.7, 0.8), "exponent": 4.0},
}


@dataclass
class GBuffer:
    """Geometry attributes of one rendered view.

    normal and position are camera-space per-pixel arrays, meaningful only
    where fg_mask is true (zeros elsewhere). material_id is -1 on background
    pixels and a label in 0..n_labels-1 on foreground pixels.
    """

    width: int
    height: int
    normal: np.ndarray
    position: np.ndarray
    material_id: np.ndarray
    fg_mask: np.ndarray

    def __post_init__(self):
        shape = (self.height, self.width)
        if self.normal.shape != shape + (3,) or self.position.shape != shape + (3,):
            raise ShapeError("normal/position must be (height, width, 3)")
        if self.material_id.shape != shape or self.fg_mask.shape != shape:
            raise ShapeError("material_id/fg_mask must be (height, width)")
        if self.fg_mask.any():
            norms = np.linalg.norm(self.normal[self.fg_mask], axis=-1)
            if np.any(np.abs(norms - 1.0) > 1e-3):
                raise ShapeError("foreground normals must be unit length")
            if np.any(self.material_id[self.fg_mask] < 0):
                raise ShapeError("foreground pixels must carry a material label")
        if np.any(self.material_id[~self.fg_mask] != -1):
            raise ShapeError("background pixels must have material_id == -1")

    @property
    def n_labels(self):
        if not self.fg_mask.any():
            return 0
        return int(self.material_id[self.fg_mask].max()) + 1


def camera_rays(resolution, fov_deg=FOV_DEG):
    """Unit ray directions through pixel centers, shape (res, res, 3).

    Rays point from the camera into the scene (z < 0); the top image row
    looks upward (+y).
    """
    r = int(resolution)
    if r < 1:
        raise ConfigError(f"resolution must be positive, got {resolution}")
    t = np.tan(np.deg2rad(fov_deg) / 2.0)
    px = (np.arange(r) + 0.5) / r * 2.0 - 1.0
    x, y = np.meshgrid(px * t, -px * t)
    d = np.stack([x, y, -np.ones_like(x)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def random_rotation(rng):
    """Uniform random rotation matrix (quaternion method)."""
    u1, u2, u3 = rng.uniform(size=3)
    q = np.array(
        [
            np.sqrt(1 - u1) * np.sin(2 * np.pi * u2),
            np.sqrt(1 - u1) * np.cos(2 * np.pi * u2),
            np.sqrt(u1) * np.sin(2 * np.pi * u3),
            np.sqrt(u1) * np.cos(2 * np.pi * u3),
        ]
    )
    w, x, y, z = q[3], q[0], q[1], q[2]
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _check_view(view):
    if view is None:
        return np.eye(3)
    r = np.asarray(view, dtype=np.float64)
    if r.shape != (3, 3) or not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
        raise ConfigError("view must be a 3x3 rotation matrix")
    return r


def _sphere_trace(inside_fn, dist_fn, origins, dirs, t_max, tol=1e-4):
    """Conservative distance marching toward the inside_fn = 0 surface.

    inside_fn(p) is negative inside the shape; dist_fn(p) is a positive,
    non-overshooting step bound outside. A ray hits once inside_fn drops
    below tol (the conservative steps approach the surface geometrically but
    never cross it). Returns (t, hit_mask).
    """
    n = len(origins)
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for _ in range(384):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        p = origins[idx] + t[idx, None] * dirs[idx]
        step = dist_fn(p)
        crossed = inside_fn(p) < tol
        hit[idx[crossed]] = True
        active[idx[crossed]] = False
        far = idx[~crossed]
        t[far] += np.maximum(step[~crossed], 1e-5)
        overshot = far[t[far] > t_max]
        active[overshot] = False
    return t, hit


def _shape_functions(shape, params):
    """(inside_fn, dist_fn, normal_fn, bound_radius) in object space."""
    if shape == "sphere":
        r = float(params["radius"])
        if r <= 0:
            raise ConfigError(f"sphere radius must be positive, got {r}")
        return None, None, None, r
    if shape == "torus":
        big = float(params["major_radius"])
        small = float(params["minor_radius"])
        if big <= 0 or small <= 0 or small >= big:
            raise ConfigError(
                f"torus radii must satisfy 0 < minor < major, got {small}, {big}"
            )

        def inside(p):
            q = np.hypot(np.hypot(p[:, 0], p[:, 2]) - big, p[:, 1])
            return q - small

        def normal(p):
            s = np.hypot(p[:, 0], p[:, 2])
            ring = np.stack([big * p[:, 0] / s, np.zeros(len(p)), big * p[:, 2] / s], axis=-1)
            d = p - ring
            return d / np.linalg.norm(d, axis=-1, keepdims=True)

        # the torus inside-function is an exact signed distance
        def dist(p):
            return np.maximum(inside(p), 0.0) * 0.95

        return inside, dist, normal, big + small
    if shape == "superellipsoid":
        axes = np.asarray(params["semi_axes"], dtype=np.float64)
        p_exp = float(params["exponent"])
        if axes.shape != (3,) or np.any(axes <= 0):
            raise ConfigError(f"semi_axes must be 3 positive values, got {axes}")
        if p_exp < 1.0:
            raise ConfigError(f"superellipsoid exponent must be >= 1, got {p_exp}")

        def inside(p):
            return np.sum(np.abs(p / axes) ** p_exp, axis=-1) - 1.0

        def normal(p):
            g = (
                p_exp
                / axes
                * np.sign(p)
                * np.abs(p / axes) ** (p_exp - 1.0)
            )
            return g / np.linalg.norm(g, axis=-1, keepdims=True)

        def dist(p):
            # Newton-style distance estimate with a conservative factor
            f = inside(p)
            g = p_exp / axes * np.abs(p / axes) ** (p_exp - 1.0)
            gn = np.maximum(np.linalg.norm(g, axis=-1), 1e-6)
            return np.maximum(f, 0.0) / gn * 0.5

        return inside, dist, normal, float(axes.max())
    raise ConfigError(f"unknown shape {shape!r}")


def gen_gbuffer(shape, view=None, resolution=512, params=None,
                camera_distance=CAMERA_DISTANCE):
    """Ray-cast a procedural shape into a GBuffer.

    shape is one of 'sphere', 'torus', 'superellipsoid'; view rotates the
    object in camera space (None = identity); params overrides the entries
    of SHAPE_DEFAULTS for that shape. Normals are analytic and the
    foreground mask is the shape's silhouette. One material label (0) covers
    the whole foreground; segmentation assigns finer labels separately.
    """
    if shape not in SHAPE_DEFAULTS:
        raise ConfigError(f"unknown shape {shape!r}")
    cfg = dict(SHAPE_DEFAULTS[shape])
    extra = set(params or {}) - set(cfg)
    if extra:
        raise ConfigError(f"unknown parameters for {shape}: {sorted(extra)}")
    cfg.update(params or {})
    rot = _check_view(view)
    res = int(resolution)
    rays = camera_rays(res).reshape(-1, 3)
    center = np.array([0.0, 0.0, -float(camera_distance)])

    # transform rays to object space
    o_obj = np.broadcast_to(-center @ rot, rays.shape)
    d_obj = rays @ rot

    inside_fn, dist_fn, normal_fn, bound = _shape_functions(shape, cfg)
    if shape == "sphere":
        r = float(cfg["radius"])
        b = np.sum(o_obj * d_obj, axis=-1)
        c = np.sum(o_obj * o_obj, axis=-1) - r * r
        disc = b * b - c
        hit = disc > 0.0
        t = np.where(hit, -b - np.sqrt(np.maximum(disc, 0.0)), 0.0)
        hit &= t > 0.0
        p_obj = o_obj + t[:, None] * d_obj
        n_obj = p_obj / r
    else:
        t_max = float(camera_distance) + bound + 1.0
        t, hit = _sphere_trace(inside_fn, dist_fn, o_obj, d_obj, t_max)
        p_obj = o_obj + t[:, None] * d_obj
        n_obj = np.zeros_like(p_obj)
        if hit.any():
            n_obj[hit] = normal_fn(p_obj[hit])

    normal = np.where(hit[:, None], n_obj @ rot.T, 0.0)
    position = np.where(hit[:, None], p_obj @ rot.T + center, 0.0)
    material_id = np.where(hit, 0, -1).astype(np.int32)
    return GBuffer(
        width=res,
        height=res,
        normal=normal.reshape(res, res, 3),
        position=position.reshape(res, res, 3),
        material_id=material_id.reshape(res, res),
        fg_mask=hit.reshape(res, res),
    )


def save_gbuffer(g, out_dir, stem):
    """Write the PFM triplet <stem>.normal.pfm / .matid.pfm / .mask.pfm.

    matid stores the label in the R channel (-1 on background); mask stores
    1.0 / 0.0 in the R channel. Positions are not persisted; they are only
    needed to segment freshly generated shapes.
    """
    import os

    h, w = g.height, g.width
    imageio.write_pfm(os.path.join(out_dir, f"{stem}.normal.pfm"),
                      g.normal.astype(np.float32))
    matid = np.zeros((h, w, 3), dtype=np.float32)
    matid[..., 0] = g.material_id
    imageio.write_pfm(os.path.join(out_dir, f"{stem}.matid.pfm"), matid)
    mask = np.zeros((h, w, 3), dtype=np.float32)
    mask[..., 0] = g.fg_mask
    imageio.write_pfm(os.path.join(out_dir, f"{stem}.mask.pfm"), mask)


def load_gbuffer(in_dir, stem):
    """Read a PFM triplet back into a GBuffer (positions come back as zeros)."""
    import os

    normal = imageio.read_pfm(os.path.join(in_dir, f"{stem}.normal.pfm"))
    matid = imageio.read_pfm(os.path.join(in_dir, f"{stem}.matid.pfm"))
    mask = imageio.read_pfm(os.path.join(in_dir, f"{stem}.mask.pfm"))
    h, w = normal.shape[:2]
    fg = mask[..., 0] > 0.5
    return GBuffer(
        width=w,
        height=h,
        normal=np.where(fg[..., None], normal.astype(np.float64), 0.0),
        position=np.zeros((h, w, 3)),
        material_id=np.round(matid[..., 0]).astype(np.int32),
        fg_mask=fg,
    )
