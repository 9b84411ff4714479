"""Analytic reflectance models and the seeded material bank.

Two BRDF models are supported: ideal diffuse (lambert) and the normalized
Blinn-Phong half-vector model.  A seeded bank of 100 materials stands in for
measured reflectance data; its specular albedos are damped so that every bank
entry conserves energy under the renderer's discrete hemisphere quadrature,
which the raw half-vector normalization alone does not guarantee.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sphere
from .errors import ConfigError

MODEL_LAMBERT = "lambert"
MODEL_BLINN = "blinn-phong"

# Exponents the bank samples from. A discrete set keeps the per-exponent
# energy tabulation (see specular_energy_factor) cheap and cacheable.
BANK_EXPONENTS = tuple(float(2 ** k) for k in range(11))  # 1 .. 1024

_ALBEDO_TOL = 1e-9


@dataclass(frozen=True)
class Material:
    """A single reflectance model with per-channel albedos.

    diffuse_albedo and specular_albedo are RGB triples in [0, 1] with
    diffuse + specular <= 1 per channel; exponent is the Blinn-Phong
    shininess (>= 1) and is ignored for lambert materials.
    """

    model: str
    diffuse_albedo: np.ndarray
    specular_albedo: np.ndarray = field(default=None)
    exponent: float = 1.0

    def __post_init__(self):
        if self.model not in (MODEL_LAMBERT, MODEL_BLINN):
            raise ConfigError(f"unknown material model {self.model!r}")
        rho_d = np.asarray(self.diffuse_albedo, dtype=np.float64)
        rho_s = self.specular_albedo
        rho_s = np.zeros(3) if rho_s is None else np.asarray(rho_s, dtype=np.float64)
        if rho_d.shape != (3,) or rho_s.shape != (3,):
            raise ConfigError("albedos must be RGB triples of shape (3,)")
        if np.any(rho_d < -_ALBEDO_TOL) or np.any(rho_s < -_ALBEDO_TOL):
            raise ConfigError("albedos must be non-negative")
        if np.any(rho_d + rho_s > 1.0 + _ALBEDO_TOL):
            raise ConfigError("diffuse + specular albedo must be <= 1 per channel")
        if self.model == MODEL_LAMBERT and np.any(rho_s > _ALBEDO_TOL):
            raise ConfigError("lambert materials must have zero specular albedo")
        if self.model == MODEL_BLINN and not self.exponent >= 1.0:
            raise ConfigError(f"blinn-phong exponent must be >= 1, got {self.exponent}")
        object.__setattr__(self, "diffuse_albedo", rho_d)
        object.__setattr__(self, "specular_albedo", rho_s)
        object.__setattr__(self, "exponent", float(self.exponent))


def eval_brdf(mat, wi, wo, n):
    """Evaluate the BRDF for unit directions wi (toward light), wo, n.

    Returns an RGB triple in 1/sr. Zero when the light is below the surface
    (n.wi <= 0). Blinn-Phong adds rho_s * (e+2)/(2pi) * max(0, n.h)^e with
    h = normalize(wi + wo) on top of the lambertian rho_d / pi term.
    """
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    for d in (wi, wo, n):
        sphere._check_unit(d)
    return eval_brdf_batch(mat, wi, wo, n)


def eval_brdf_batch(mat, wi, wo, n):
    """Broadcasting BRDF evaluation over arrays of shape (..., 3).

    No unit checks; callers supplying grids are expected to pass texel-center
    and normalized G-buffer directions.
    """
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    ndwi = np.sum(n * wi, axis=-1)
    f = np.broadcast_to(mat.diffuse_albedo / np.pi, ndwi.shape + (3,))
    if mat.model == MODEL_BLINN:
        h = wi + wo
        hn = np.linalg.norm(h, axis=-1, keepdims=True)
        # wi == -wo has no well-defined half vector; the lobe vanishes there
        h = np.where(hn > 1e-12, h / np.where(hn > 0, hn, 1.0), 0.0)
        ndh = np.clip(np.sum(n * h, axis=-1), 0.0, None)
        e = mat.exponent
        lobe = (e + 2.0) / (2.0 * np.pi) * ndh ** e
        f = f + lobe[..., None] * mat.specular_albedo
    return np.where((ndwi > 0.0)[..., None], f, 0.0)


def specular_dir_albedo(exponent):
    """Directional-hemispherical reflectance of the unit-albedo specular lobe
    at normal viewing (wo = n), in closed form.

    With c = cos(pi/4):
        R(e) = 8 (e+2) (1 - c^(e+4)) / (e+4) - 4 (1 - c^(e+2))
    This is the continuum worst case over viewing angles; it tends to 4 as
    e grows, which is why raw Blinn-Phong albedos cannot be used unscaled.
    """
    e = float(exponent)
    c = np.cos(np.pi / 4.0)
    return 8.0 * (e + 2.0) * (1.0 - c ** (e + 4.0)) / (e + 4.0) - 4.0 * (
        1.0 - c ** (e + 2.0)
    )


def _energy_scan_normals(width, height, seed):
    """Scan directions for worst-case quadrature sums.

    The texel grid is invariant under whole-column azimuth shifts, so only
    azimuths within one column width need scanning; polar angle is scanned
    densely (texel centers plus seeded sub-texel offsets).
    """
    rng = np.random.default_rng(seed)
    dv = np.concatenate([[0.5], rng.uniform(0.02, 0.98, size=4)])
    du = np.concatenate([[0.5], rng.uniform(0.02, 0.98, size=4)])
    theta = ((np.arange(height)[:, None] + dv) * np.pi / height).ravel()
    phi = (du / width - 0.5) * 2.0 * np.pi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(tt)
    dirs = np.stack([st * np.sin(pp), np.cos(tt), st * np.cos(pp)], axis=-1)
    return dirs.reshape(-1, 3)


_energy_cache = {}


def discrete_energy_factors(exponent, width=64, height=32):
    """Worst-case discrete quadrature sums for the renderer's texel grid.

    Returns (cos_factor, spec_factor):
      cos_factor  = max over scanned normals of sum_t max(0, n.wi_t) dw_t / pi
      spec_factor = max over scanned (n, wo) of
                    sum_t (e+2)/(2pi) (n.h_t)^e max(0, n.wi_t) dw_t
    scanned over texel-aligned and jittered normals with wo = n and with wo
    tilted 15 degrees off n (the widest view angle the camera produces).
    Used to damp bank specular albedos so rendered pixels never exceed the
    incoming radiance under a constant environment.
    """
    key = (float(exponent), width, height)
    if key in _energy_cache:
        return _energy_cache[key]
    wi = sphere.texel_grid_dirs(width, height).reshape(-1, 3)
    dw = np.repeat(sphere.row_solid_angles(width, height), width)
    normals = _energy_scan_normals(width, height, seed=7)
    cosn = np.clip(normals @ wi.T, 0.0, None)  # (n_scan, n_tex)
    cos_factor = float((cosn @ dw).max() / np.pi)

    # two orthogonal tilt frames for wo: along the meridian and along azimuth
    up = np.array([0.0, 1.0, 0.0])
    east = np.cross(up, normals)
    east = east / np.linalg.norm(east, axis=-1, keepdims=True)
    north = np.cross(normals, east)

    e = float(exponent)
    spec_factor = 0.0
    # wo = n, and wo tilted by the camera's widest half-angle off n
    tilt = np.deg2rad(15.0)
    for wo in (
        normals,
        np.cos(tilt) * normals + np.sin(tilt) * north,
        np.cos(tilt) * normals + np.sin(tilt) * east,
    ):
        h = wi[None, :, :] + wo[:, None, :]
        hn = np.linalg.norm(h, axis=-1)
        ndh = np.clip(
            np.einsum("sj,stj->st", normals, h) / np.where(hn > 1e-12, hn, 1.0),
            0.0,
            None,
        )
        sums = ((e + 2.0) / (2.0 * np.pi) * ndh ** e * cosn) @ dw
        spec_factor = max(spec_factor, float(sums.max()))
    _energy_cache[key] = (cos_factor, spec_factor)
    return _energy_cache[key]


def specular_energy_factor(exponent, width=64, height=32):
    """Divisor that makes a unit specular albedo energy-safe on this grid.

    The larger of the continuum worst case and the scanned discrete worst
    case; never below 1 so damped albedos also satisfy the plain
    diffuse + specular <= 1 bound.
    """
    _, spec = discrete_energy_factors(exponent, width, height)
    return max(spec, specular_dir_albedo(exponent), 1.0)


def material_bank(n=100, seed=20230, lambert_fraction=0.3):
    """Seeded bank of n analytic materials (default 100).

    Roughly lambert_fraction of entries are pure lambert; the rest are
    Blinn-Phong with exponents drawn from BANK_EXPONENTS. Specular albedos
    are divided by specular_energy_factor so that under a constant
    environment of radiance L no rendered pixel exceeds L (up to quadrature
    slack), mirroring the passivity of measured reflectance data.
    """
    if n < 1:
        raise ConfigError(f"bank size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    cos_factor, _ = discrete_energy_factors(BANK_EXPONENTS[0])
    cos_factor = max(cos_factor, 1.0)
    bank = []
    for _ in range(n):
        if rng.random() < lambert_fraction:
            rho_d = rng.uniform(0.05, 0.95, size=3)
            bank.append(Material(MODEL_LAMBERT, rho_d))
            continue
        e = float(rng.choice(BANK_EXPONENTS))
        split = rng.uniform(0.2, 0.9)
        rho_d = rng.uniform(0.05, 1.0, size=3) * split / cos_factor
        rho_s = rng.uniform(0.2, 1.0, size=3) * (1.0 - split)
        rho_s = rho_s / specular_energy_factor(e)
        bank.append(Material(MODEL_BLINN, rho_d, rho_s, e))
    return bank
