"""K-means material segmentation on per-pixel geometry features.

Regions are formed by Lloyd's algorithm over 6D features: camera-space
positions and normals, each dimension independently rescaled to (-1, 1) so
both cues weigh equally. Deterministic under a seed, with fixed tie rules:
equidistant points join the lowest-index centroid, and a cluster that empties
is reseeded to the point farthest from its assigned centroid.
"""

import numpy as np

from .errors import ConfigError, DataError


def rescale_features(positions, normals):
    """Stack positions and normals into (n, 6) features, each dimension
    min-max rescaled to (-1, 1). A dimension with no spread becomes 0."""
    raw = np.concatenate(
        [np.asarray(positions, dtype=np.float64), np.asarray(normals, dtype=np.float64)],
        axis=-1,
    )
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (raw - lo) / safe - 1.0
    return np.where(span > 0, out, 0.0)


def _assign(features, centroids):
    """Label of the nearest centroid per point; ties go to the lowest index."""
    d2 = np.sum((features[:, None, :] - centroids[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1), d2


def kmeans(features, k, seed=0, max_iters=100):
    """Lloyd's k-means. Returns (labels, centroids, objectives).

    objectives holds the sum of squared distances after each assignment;
    the sequence is checked to be non-increasing at every iteration.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"features must be (n, d), got {x.shape}")
    n = len(x)
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if n < k:
        raise DataError(f"need at least k={k} points, got {n}")
    distinct = np.unique(x, axis=0)
    if len(distinct) < k:
        raise DataError(
            f"duplicate centroids: k={k} exceeds {len(distinct)} distinct points"
        )
    rng = np.random.default_rng(seed)
    centroids = distinct[rng.permutation(len(distinct))[:k]]

    labels = None
    objectives = []
    for _ in range(max_iters):
        new_labels, d2 = _assign(x, centroids)
        obj = float(d2[np.arange(n), new_labels].sum())
        assert not objectives or obj <= objectives[-1] * (1 + 1e-12) + 1e-9, (
            "k-means objective increased"
        )
        objectives.append(obj)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        point_d2 = d2[np.arange(n), labels]
        taken = np.zeros(n, dtype=bool)
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                # reseed an empty cluster to the farthest unclaimed point
                cand = np.where(taken, -np.inf, point_d2)
                far = int(np.argmax(cand))
                centroids[j] = x[far]
                taken[far] = True
    return labels, centroids, objectives


def segment_materials(positions, normals, k, seed=0):
    """Cluster foreground pixels into k material regions.

    positions and normals are (n, 3) arrays over foreground pixels; returns
    integer labels (n,) in 0..k-1.
    """
    feats = rescale_features(positions, normals)
    labels, _, _ = kmeans(feats, k, seed=seed)
    return labels


def segment_gbuffer(g, k, seed=0):
    """Assign k-means material labels to a GBuffer's foreground, in place.

    Returns the GBuffer for chaining. Background pixels keep label -1.
    """
    fg = g.fg_mask
    labels = segment_materials(g.position[fg], g.normal[fg], k, seed=seed)
    g.material_id = np.full(fg.shape, -1, dtype=np.int32)
    g.material_id[fg] = labels
    return g
