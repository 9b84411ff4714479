"""Lat-long sphere geometry and the HDR file format, end to end.

Builds a procedural environment map, checks that the per-texel solid
angles tile the sphere, and round-trips the map through the PFM writer
to show the format is lossless. Outputs land in demos/out/01/.
"""

import os

import numpy as np

from lumen import color, envgen, imageio, sphere

out = os.path.join(os.path.dirname(__file__), "out", "01")
os.makedirs(out, exist_ok=True)

# A procedural HDR environment: low-frequency sky gradient plus a few
# bright area lights. Rows run from the north pole (v=0) to the south
# pole, columns sweep azimuth, and the aspect is always 2:1.
env = envgen.gen_envmap(seed=7, width=128, height=64)
print(f"envmap shape {env.shape}, range [{env.min():.3f}, {env.max():.3f}]")

# Every texel subtends a solid angle that depends only on its row. The
# whole grid must tile the unit sphere: sum = 4*pi.
dw = np.repeat(sphere.row_solid_angles(128, 64), 128)
total = dw.sum()
print(f"solid angle sum {total:.6f} vs 4*pi {4 * np.pi:.6f} "
      f"(rel err {abs(total - 4 * np.pi) / (4 * np.pi):.2e})")

# Texel centers map to unit directions and back to the same texel.
dirs = sphere.texel_grid_dirs(128, 64)
u, v = sphere.dir_to_texel(dirs[10, 99], 128, 64)
print(f"texel (99, 10) -> direction {dirs[10, 99]} -> texel ({u}, {v})")

# PFM stores raw float32 planes, so a write/read cycle is exact and a
# second write reproduces the first file byte for byte.
p1 = os.path.join(out, "env.pfm")
p2 = os.path.join(out, "env_again.pfm")
imageio.write_pfm(p1, env.astype(np.float32))
back = imageio.read_pfm(p1)
imageio.write_pfm(p2, back)
same_values = np.array_equal(env.astype(np.float32), back)
with open(p1, "rb") as f:
    b1 = f.read()
with open(p2, "rb") as f:
    b2 = f.read()
print(f"pfm round trip exact: {same_values}, bytes identical: {b1 == b2}")

# HDR values do not fit a display, so previews use percentile exposure:
# the 90th percentile of luminance maps to 1.0 before gamma encoding.
ldr, exposure = color.tonemap_percentile(env)
imageio.write_png(os.path.join(out, "env_preview.png"), ldr)
print(f"preview written at exposure {exposure:.4f}")

# Downsampling conserves flux: total energy weighted by solid angle is
# unchanged when the grid shrinks.
small = sphere.resample_env(env, 32, 16)
flux_full = (env * np.repeat(sphere.row_solid_angles(128, 64), 128)[
    None].reshape(64, 128, 1)).sum()
flux_small = (small * np.repeat(sphere.row_solid_angles(32, 16), 32)[
    None].reshape(16, 32, 1)).sum()
print(f"flux before {flux_full:.4f} after {flux_small:.4f} "
      f"(rel err {abs(flux_full - flux_small) / flux_full:.2e})")
