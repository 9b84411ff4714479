"""The baseline family and the evaluation report.

Variants scored side by side on a manifest's test split:

- singlet / singlet-bg: the one-map network run on each of a tuple's refmaps
  individually (mean score over them);
- best-of-singlets: the singlet prediction closest to the reference, chosen
  by an oracle;
- nn: the nearest neighbor to the reference among the training environments,
  including all whole-texel azimuth rotations, chosen by an oracle;
- mask-aware-mean: the singlet predictions averaged with coverage weights;
- tuple / tuple-bg: the full multi-map network.

Scores are protocol DSSIMs (ground-truth-anchored tone mapping); the report
carries per-sample values, means with standard errors, dominant-light
distances, luminance histograms, and coverage-vs-score pairs, and can be
written out as CSV files plus a side-by-side comparison sheet PNG.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import color, dataset, imageio, metrics, network, refmap, sphere
from .errors import ConfigError, DataError, ShapeError

TABLE_VARIANTS = (
    "singlet",
    "singlet-bg",
    "best-of-singlets",
    "nn",
    "mask-aware-mean",
    "tuple",
    "tuple-bg",
)

_VARIANT_WEIGHTS = {
    "singlet": "singlet",
    "singlet-bg": "singlet-bg",
    "best-of-singlets": "singlet",
    "nn": None,
    "mask-aware-mean": "singlet",
    "tuple": "tuple",
    "tuple-bg": "tuple-bg",
}

_SINGLET_DERIVED = ("singlet", "best-of-singlets", "mask-aware-mean")


def nn_oracle(gt, train_envs):
    """Best match to gt among the bank, searching all whole-texel azimuth
    rotations of every candidate; returns (best rotated map, its score).

    Ties break toward the lowest bank index, then the smallest rotation.
    """
    if not len(train_envs):
        raise DataError("nearest-neighbor oracle needs a non-empty bank")
    gt = np.asarray(gt, dtype=np.float64)
    best = None
    best_score = np.inf
    ldr_gt = None
    for cand in train_envs:
        cand = np.asarray(cand, dtype=np.float64)
        if cand.shape == gt.shape:
            # Tone mapping is pixelwise at a fixed exposure, so it commutes
            # with column rolls: map once, score the rolls.
            if ldr_gt is None:
                ldr_gt, exposure = color.tonemap_percentile(
                    gt, metrics.ANCHOR_PERCENTILE
                )
            ldr_cand = color.srgb_encode(np.clip(exposure * cand, 0.0, 1.0))
            for s in range(cand.shape[1]):
                score = metrics.dssim(np.roll(ldr_cand, s, axis=1), ldr_gt)
                if score < best_score:
                    best_score = score
                    best = sphere.rotate_y(cand, s)
        else:
            for s in range(cand.shape[1]):
                rolled = sphere.rotate_y(cand, s)
                score = metrics.eval_pair(rolled, gt)
                if score < best_score:
                    best_score = score
                    best = rolled
    return np.array(best), float(best_score)


def mask_aware_mean(preds, coverages):
    """Coverage-weighted mean of predicted maps; unweighted if all zero."""
    if not len(preds):
        raise DataError("mean of an empty prediction list")
    if len(preds) != len(coverages):
        raise ShapeError(
            f"{len(preds)} predictions vs {len(coverages)} coverages"
        )
    stack = np.stack([np.asarray(p, dtype=np.float64) for p in preds])
    w = np.asarray(coverages, dtype=np.float64)
    if np.any(w < 0.0):
        raise DataError(f"negative coverage weight in {coverages}")
    total = w.sum()
    if total == 0.0:
        return stack.mean(axis=0)
    return np.einsum("i,ihwc->hwc", w, stack) / total


def best_of_singlets(preds, gt):
    """The prediction scoring lowest against gt; ties pick the lowest index."""
    if not len(preds):
        raise DataError("best-of-singlets over an empty prediction list")
    best = None
    best_score = np.inf
    for p in preds:
        score = metrics.eval_pair(p, gt)
        if score < best_score:
            best_score = score
            best = p
    return np.asarray(best, dtype=np.float64), float(best_score)


@dataclass
class EvalReport:
    """Everything run_table measures; deterministic given weights+manifest."""

    variants: tuple
    n_samples: int
    per_sample: dict       # variant -> [dssim per test tuple]
    means: dict            # variant -> (mean, sem)
    light_distances: dict  # variant -> [texel distance per test tuple]
    histograms: tuple      # (bin_edges, pred_counts, gt_counts)
    coverage_pairs: list   # (refmap coverage, singlet dssim) per singlet run

    def table_rows(self):
        rows = []
        for v in self.variants:
            mean, sem = self.means[v]
            rows.append((v, self.n_samples, mean, sem))
        return rows


def _mean_sem(values):
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sem = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, sem


def _canonical_variants(variants):
    vs = list(dict.fromkeys(variants))
    unknown = [v for v in vs if v not in TABLE_VARIANTS]
    if unknown:
        raise ConfigError(
            f"unknown variants {unknown}; choose from {list(TABLE_VARIANTS)}"
        )
    if not vs:
        raise ConfigError("no variants requested")
    return tuple(sorted(vs, key=TABLE_VARIANTS.index))


def _load_models(variants, weights_bank, n_mat, x_ref):
    needed = sorted({
        _VARIANT_WEIGHTS[v] for v in variants if _VARIANT_WEIGHTS[v]
    })
    missing = [k for k in needed if k not in weights_bank]
    if missing:
        raise ConfigError(f"weights bank lacks entries for {missing}")
    models = {}
    for key in needed:
        count = 1 if key.startswith("singlet") else n_mat
        models[key] = network.load_for_inference(
            weights_bank[key], count, x_ref=x_ref
        )
    return models


def run_table(variants, manifest_path, weights_bank, out_dir=None,
              x_ref=color.DEFAULT_LOG_ANCHOR, max_sheet_rows=6):
    """Score the requested variants over a manifest's test split.

    weights_bank maps {"singlet", "singlet-bg", "tuple", "tuple-bg"} (as
    needed by the chosen variants) to weight-file paths. Returns an
    EvalReport; when out_dir is given also writes table.csv, sparsity.csv,
    lumhist.csv, and comparison.png there.
    """
    variants = _canonical_variants(variants)
    root = os.path.dirname(os.path.abspath(manifest_path))
    entries = dataset.load_manifest(manifest_path)
    test_entries = [e for e in entries if e["split"] == "test"]
    if not test_entries:
        raise DataError(f"{manifest_path}: no tuples tagged as test")

    tuples = [dataset.load_tuple(e, root) for e in test_entries]
    n_mat = tuples[0].n_mat
    if any(t.n_mat != n_mat for t in tuples):
        raise DataError("test tuples disagree on their material count")
    models = _load_models(variants, weights_bank, n_mat, x_ref)

    bank = []
    if "nn" in variants:
        seen = set()
        for e in entries:
            if e["split"] == "train" and e["gt_env"] not in seen:
                seen.add(e["gt_env"])
                bank.append(imageio.read_pfm(os.path.join(root, e["gt_env"])))
        if not bank:
            raise DataError("nearest-neighbor variant needs training tuples")

    per_sample = {v: [] for v in variants}
    representatives = {v: [] for v in variants}
    coverage_pairs = []
    need_singlets = any(v in variants for v in _SINGLET_DERIVED)

    for t in tuples:
        gt = t.gt_env
        ref_arrays = [r.pixels for r in t.refmaps]
        if need_singlets:
            net = models["singlet"]
            singlet_preds = [net.predict_env([a]) for a in ref_arrays]
            singlet_scores = [metrics.eval_pair(p, gt) for p in singlet_preds]
        for v in variants:
            if v == "singlet":
                per_sample[v].append(float(np.mean(singlet_scores)))
                representatives[v].append(singlet_preds[0])
                for r, s in zip(t.refmaps, singlet_scores):
                    coverage_pairs.append((refmap.coverage(r), s))
            elif v == "singlet-bg":
                net = models["singlet-bg"]
                preds = [
                    net.predict_env([a], t.background) for a in ref_arrays
                ]
                scores = [metrics.eval_pair(p, gt) for p in preds]
                per_sample[v].append(float(np.mean(scores)))
                representatives[v].append(preds[0])
            elif v == "best-of-singlets":
                best, score = best_of_singlets(singlet_preds, gt)
                per_sample[v].append(score)
                representatives[v].append(best)
            elif v == "nn":
                best, score = nn_oracle(gt, bank)
                per_sample[v].append(score)
                representatives[v].append(best)
            elif v == "mask-aware-mean":
                covs = [refmap.coverage(r) for r in t.refmaps]
                env = mask_aware_mean(singlet_preds, covs)
                per_sample[v].append(metrics.eval_pair(env, gt))
                representatives[v].append(env)
            elif v == "tuple":
                env = models["tuple"].predict_env(ref_arrays)
                per_sample[v].append(metrics.eval_pair(env, gt))
                representatives[v].append(env)
            elif v == "tuple-bg":
                env = models["tuple-bg"].predict_env(ref_arrays, t.background)
                per_sample[v].append(metrics.eval_pair(env, gt))
                representatives[v].append(env)

    gts = [t.gt_env for t in tuples]
    light_distances = {
        v: [
            metrics.dominant_light_distance(p, g)
            for p, g in zip(representatives[v], gts)
        ]
        for v in variants
    }
    hist_variant = next(
        v for v in ("tuple-bg", "tuple", "singlet-bg", "singlet",
                    "best-of-singlets", "mask-aware-mean", "nn")
        if v in variants
    )
    histograms = metrics.luminance_histograms(
        representatives[hist_variant], gts
    )
    report = EvalReport(
        variants=variants,
        n_samples=len(tuples),
        per_sample=per_sample,
        means={v: _mean_sem(per_sample[v]) for v in variants},
        light_distances=light_distances,
        histograms=histograms,
        coverage_pairs=coverage_pairs,
    )
    if out_dir is not None:
        write_report(report, representatives, gts, out_dir, max_sheet_rows)
    return report


def write_report(report, representatives, gts, out_dir, max_sheet_rows=6):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "table.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "n", "mean_dssim", "sem"])
        for v, n, mean, sem in report.table_rows():
            w.writerow([v, n, f"{mean:.6f}", f"{sem:.6f}"])
    with open(os.path.join(out_dir, "sparsity.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["coverage", "dssim"])
        for cov, score in report.coverage_pairs:
            w.writerow([f"{cov:.6f}", f"{score:.6f}"])
    edges, hp, hg = report.histograms
    with open(os.path.join(out_dir, "lumhist.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_lo", "bin_hi", "pred_count", "gt_count"])
        for i in range(len(hp)):
            w.writerow(
                [f"{edges[i]:.6e}", f"{edges[i + 1]:.6e}", hp[i], hg[i]]
            )
    _write_sheet(
        os.path.join(out_dir, "comparison.png"),
        report.variants,
        representatives,
        gts,
        max_sheet_rows,
    )


def _write_sheet(path, variants, representatives, gts, max_rows):
    """One PNG: rows are test samples, columns are GT then each variant,
    all tone-mapped with the ground truth's anchor."""
    gutter = 2
    rows = []
    for i, gt in enumerate(gts[:max_rows]):
        ldr_gt, exposure = color.tonemap_percentile(
            gt, metrics.ANCHOR_PERCENTILE
        )
        tiles = [ldr_gt]
        for v in variants:
            pred = representatives[v][i]
            if pred.shape != gt.shape:
                pred = sphere.resample_env(pred, gt.shape[1], gt.shape[0])
            tiles.append(
                color.srgb_encode(np.clip(exposure * pred, 0.0, 1.0))
            )
        h = gt.shape[0]
        pad = np.ones((h, gutter, 3))
        strip = [tiles[0]]
        for tile in tiles[1:]:
            strip.extend([pad, tile])
        rows.append(np.concatenate(strip, axis=1))
    w = rows[0].shape[1]
    pad = np.ones((gutter, w, 3))
    sheet = [rows[0]]
    for r in rows[1:]:
        sheet.extend([pad, r])
    imageio.write_png(path, np.concatenate(sheet, axis=0))


def material_sweep(weights_path, manifest_path, counts=None,
                   x_ref=color.DEFAULT_LOG_ANCHOR, out_csv=None):
    """Score one weight set with varying numbers of input maps per tuple.

    For count k every test tuple contributes its first k refmaps. Returns
    {count: (mean, sem, n)} and optionally writes a CSV.
    """
    root = os.path.dirname(os.path.abspath(manifest_path))
    entries = dataset.load_manifest(manifest_path)
    test_entries = [e for e in entries if e["split"] == "test"]
    if not test_entries:
        raise DataError(f"{manifest_path}: no tuples tagged as test")
    tuples = [dataset.load_tuple(e, root) for e in test_entries]
    n_mat = min(t.n_mat for t in tuples)
    if counts is None:
        counts = tuple(range(1, n_mat + 1))
    bad = [k for k in counts if not 1 <= k <= n_mat]
    if bad:
        raise ConfigError(
            f"counts {bad} outside 1..{n_mat} available per tuple"
        )
    results = {}
    for k in counts:
        net = network.load_for_inference(weights_path, k, x_ref=x_ref)
        scores = []
        for t in tuples:
            arrays = [r.pixels for r in t.refmaps[:k]]
            bg = t.background if net.cfg.with_background else None
            scores.append(metrics.eval_pair(net.predict_env(arrays, bg), t.gt_env))
        mean, sem = _mean_sem(scores)
        results[k] = (mean, sem, len(scores))
    if out_csv is not None:
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["n_mat", "n", "mean_dssim", "sem"])
            for k in counts:
                mean, sem, n = results[k]
                w.writerow([k, n, f"{mean:.6f}", f"{sem:.6f}"])
    return results
