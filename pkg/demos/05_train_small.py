"""Training the estimator on a tiny corpus.

Overfits a narrow model on a handful of samples to show the training
loop, the loss log, and prediction. Takes a few minutes on a laptop
CPU. Outputs land in demos/out/05/.
"""

import os

import numpy as np

from lumen import color, sphere
from lumen.dataset import generate_corpus, load_manifest, load_tuple
from lumen.imageio import read_pfm, write_png
from lumen.metrics import eval_pair
from lumen.network import NetworkConfig, TrainConfig, load_for_inference, train

out = os.path.join(os.path.dirname(__file__), "out", "05")
corpus = os.path.join(out, "corpus")
weights = os.path.join(out, "tiny.lmw")
log = os.path.join(out, "loss.csv")

if not os.path.exists(os.path.join(corpus, "manifest.json")):
    print("generating corpus...")
    generate_corpus(corpus, n_envs=6, n_mat=2, views_per_env=1,
                    resolution=32, seed=19)

# A narrow model (base_channels=4) keeps this quick. The loss is L1 in
# a log-compressed Lab space, so chroma matters as much as intensity.
cfg = NetworkConfig(n_mat=2, base_channels=4, seed=0)
hyper = TrainConfig(epochs=120, batch_size=4,
                    log10_lr_start=-2.0, log10_lr_end=-3.0)
print("training...")
train(os.path.join(corpus, "manifest.json"), cfg, hyper, weights,
      log_path=log)

rows = [r.split(",") for r in open(log).read().strip().splitlines()[1:]]
first, last = float(rows[0][2]), float(rows[-1][2])
print(f"train loss {first:.3f} -> {last:.3f} over {len(rows)} epochs "
      f"({last / first:.1%} of initial)")

# Predict the environment behind one training tuple and compare with
# the ground truth at matched exposure.
net = load_for_inference(weights, n_mat=2)
entries = load_manifest(os.path.join(corpus, "manifest.json"))
e = next(x for x in entries if x["split"] == "train")
t = load_tuple(e, corpus)
pred = net.forward(t)
gt = read_pfm(os.path.join(corpus, e["gt_env"]))
print(f"DSSIM vs ground truth: {eval_pair(pred, gt):.4f}")

# Side by side preview: ground truth left, prediction right, both at
# the exposure anchored on the ground truth.
pred_on_gt = sphere.resample_env(pred, gt.shape[1], gt.shape[0])
gt_ldr, _ = color.tonemap_percentile(gt)
pr_ldr, _ = color.tonemap_percentile(pred_on_gt, anchor=gt)
gutter = np.ones((gt.shape[0], 2, 3))
write_png(os.path.join(out, "gt_vs_pred.png"),
          np.concatenate([gt_ldr, gutter, pr_ldr], axis=1))
print("wrote gt_vs_pred.png")
