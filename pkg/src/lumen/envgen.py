"""Procedural HDR environment maps for the synthetic corpus.

Each map is a seeded composition on a 64x32 lat-long grid: a vertical sky
gradient, a few colored boxes near the horizon, and one to three small area
lights whose radiance far exceeds the rest (the first light is always the
dominant one). User-supplied PFM panoramas can be ingested as well.
"""

import numpy as np

from . import imageio, sphere


def _lerp(a, b, t):
    return a * (1.0 - t) + b * t


def gen_envmap(seed, width=64, height=32):
    """Generate one HDR environment map, deterministic under `seed`.

    seed may be an int or a sequence of ints (e.g. (corpus_seed, env_id)).
    """
    rng = np.random.default_rng(seed)
    env = np.zeros((height, width, 3))

    # sky gradient: zenith -> horizon -> ground
    zenith = rng.uniform(0.05, 0.3) * rng.uniform(0.5, 1.0, size=3)
    horizon = rng.uniform(0.2, 0.6) * rng.uniform(0.6, 1.0, size=3)
    ground = rng.uniform(0.02, 0.15) * rng.uniform(0.4, 1.0, size=3)
    t = (np.arange(height)[:, None, None] + 0.5) / height
    upper = _lerp(zenith, horizon, np.clip(t * 2.0, 0.0, 1.0))
    lower = _lerp(horizon, ground, np.clip(t * 2.0 - 1.0, 0.0, 1.0))
    env[:] = np.where(t < 0.5, upper, lower)

    # colored boxes straddling the horizon
    for _ in range(rng.integers(2, 6)):
        bw = int(rng.integers(2, 9))
        bh = int(rng.integers(2, 7))
        u0 = int(rng.integers(0, width))
        v0 = int(rng.integers(height // 3, height - bh))
        color = rng.uniform(0.3, 2.0) * rng.uniform(0.2, 1.0, size=3)
        cols = (u0 + np.arange(bw)) % width
        env[v0 : v0 + bh, cols] = color

    # area lights; the first is scaled up to make it clearly dominant
    n_lights = int(rng.integers(1, 4))
    for i in range(n_lights):
        lw = int(rng.integers(1, 5))
        lh = int(rng.integers(1, 4))
        u0 = int(rng.integers(0, width))
        v0 = int(rng.integers(0, max(height // 2 - lh, 1)))
        radiance = rng.uniform(8.0, 60.0) * rng.uniform(0.85, 1.0, size=3)
        if i == 0:
            radiance = radiance * 2.5
        cols = (u0 + np.arange(lw)) % width
        env[v0 : v0 + lh, cols] = radiance

    return env


def gen_env_bank(n, seed, width=64, height=32):
    """List of n seeded environment maps; map i uses seed (seed, i)."""
    return [gen_envmap((seed, i), width, height) for i in range(n)]


def ingest_envmap(path, width=64, height=32):
    """Load a user-supplied PFM panorama and resample it to the corpus grid.

    The file must hold a (H, 2H, 3) non-negative map; resampling conserves
    flux per solid angle.
    """
    raw = imageio.read_pfm(path).astype(np.float64)
    sphere.validate_envmap(raw)
    return sphere.resample_env(raw, width, height)
