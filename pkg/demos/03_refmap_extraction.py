"""From a photographed object to a reflectance map.

Renders a segmented sphere, tone-maps it like a camera would, and
reprojects each material region onto the mirror-direction grid: the
partial LDR reflectance map that the estimator consumes. Outputs land
in demos/out/03/.
"""

import os

import numpy as np

from lumen import envgen, gbuffer, materials, refmap, render, segment
from lumen.imageio import write_png

out = os.path.join(os.path.dirname(__file__), "out", "03")
os.makedirs(out, exist_ok=True)

env = envgen.gen_envmap(seed=40, width=64, height=32)
rng = np.random.default_rng(8)
g = gbuffer.gen_gbuffer("superellipsoid", view=gbuffer.random_rotation(rng),
                        resolution=256)
segment.segment_gbuffer(g, k=2, seed=1)

bank = materials.material_bank(n=16, seed=5)
mats = [bank[2], bank[7]]
hdr = render.render_ibl(g, mats, env)
ldr, _ = render.tonemap_for_env(hdr, env)
write_png(os.path.join(out, "photo.png"), ldr)

# Each foreground pixel sees the environment along its mirror direction
# r = 2(n.v)n - v. Binning pixel colors by r builds a 128x128 map of the
# front hemisphere; normals never point away from the camera, so the
# back stays unobserved.
for i in range(2):
    r = refmap.extract_refmap(ldr, g, material=i)
    cov = refmap.coverage(r)
    print(f"material {i}: refmap covers {cov:.1%} of the front hemisphere")
    refmap.save_refmap(r, out, f"mat{i}")

    # The mask marks which orientation bins were actually observed;
    # unobserved texels stay zero.
    observed = r.pixels[r.mask]
    print(f"  observed texels {int(r.mask.sum())}, "
          f"mean value {observed.mean():.3f}")

# The background crop is what the estimator's second branch sees: the
# scene behind the object, blacked out under the silhouette and blurred.
bg = refmap.extract_background(ldr, g)
refmap.save_background(bg, out, "scene")
print(f"background {bg.shape}, saved with the refmap pair")

# Round trip: the pair on disk (PNG pixels + PNG mask) reloads exactly,
# because the writer quantizes before saving.
r0 = refmap.load_refmap(out, "mat0")
r1 = refmap.extract_refmap(ldr, g, material=0)
q = np.floor(r1.pixels * 255.0 + 0.5) / 255.0
q[~r1.mask] = 0.0
print(f"reload matches quantized extraction: "
      f"{np.array_equal(r0.pixels, q) and np.array_equal(r0.mask, r1.mask)}")
