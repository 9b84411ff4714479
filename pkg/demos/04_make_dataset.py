"""Synthetic corpus generation and the manifest that indexes it.

Generates a small training corpus (environments, rendered views, refmap
tuples) and walks the manifest to show what a sample contains. Outputs
land in demos/out/04/.
"""

import json
import os

import numpy as np

from lumen import refmap
from lumen.dataset import generate_corpus, load_manifest, load_tuple

out = os.path.join(os.path.dirname(__file__), "out", "04")
corpus = os.path.join(out, "corpus")

# Each environment is rendered from one view; the n_mat materials seen
# under it become one tuple. 90% of environments are tagged train, the
# rest test, split by environment so no illumination leaks across.
if not os.path.exists(os.path.join(corpus, "manifest.json")):
    print("generating corpus (a minute or two)...")
    generate_corpus(corpus, n_envs=6, n_mat=2, views_per_env=1,
                    resolution=64, seed=19)

entries = load_manifest(os.path.join(corpus, "manifest.json"))
by_split = {}
for e in entries:
    by_split.setdefault(e["split"], []).append(e)
print(f"{len(entries)} tuples: "
      + ", ".join(f"{k} {len(v)}" for k, v in sorted(by_split.items())))

# A manifest entry is plain JSON: relative paths plus tags.
print(json.dumps(entries[0], indent=2))

# Loading a tuple gives refmaps with masks, the shared background crop,
# and the ground-truth environment is stored separately as PFM.
t = load_tuple(entries[0], corpus)
covs = [refmap.coverage(r) for r in t.refmaps]
print(f"tuple of {t.n_mat}: coverages "
      + ", ".join(f"{c:.1%}" for c in covs))
print(f"background {t.background.shape}, "
      f"mean {t.background.mean():.3f}")

# Coverage varies with shape and pose; the estimator has to cope with
# whatever fraction of the hemisphere the object happened to reveal.
all_cov = []
for e in entries:
    tup = load_tuple(e, corpus)
    all_cov.extend(refmap.coverage(r) for r in tup.refmaps)
all_cov = np.array(all_cov)
print(f"corpus coverage: min {all_cov.min():.1%}, "
      f"median {np.median(all_cov):.1%}, max {all_cov.max():.1%}")
