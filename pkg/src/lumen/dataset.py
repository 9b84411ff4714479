"""Corpus assembly: single-material samples, tuples, splits, manifests.

A "single" is one rendered view of one object with one material: its partial
reflectance map, its background image, and the ground-truth environment in the
camera frame. Tuples combine refmaps of distinct materials observed under the
same illumination. Splits are made at the environment level so no environment
is shared between train and test.
"""

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import envgen, gbuffer, imageio, refmap, render, sphere
from .errors import ConfigError, DataError, FormatError
from .materials import material_bank
from .refmap import RefMap

BACKGROUND_SIZE = 128

MANIFEST_KEYS = ("refmaps", "masks", "background", "gt_env", "env_id", "split")


@dataclass
class Single:
    """One rendered single-material observation."""

    env_id: int
    view_id: int
    shape: str
    material_id: int
    refmap: RefMap
    background: np.ndarray
    gt_env: np.ndarray


@dataclass
class SampleTuple:
    """n_mat refmaps of distinct materials under one shared illumination."""

    refmaps: list
    background: np.ndarray
    gt_env: np.ndarray
    env_id: int
    view_id: int
    shape_ids: tuple = ()
    material_ids: tuple = ()

    def __post_init__(self):
        if len(self.refmaps) < 1:
            raise DataError("a tuple needs at least one refmap")
        ids = tuple(self.material_ids)
        if len(set(ids)) != len(ids):
            raise DataError(f"tuple materials must be distinct, got {ids}")
        if self.background.shape != (BACKGROUND_SIZE, BACKGROUND_SIZE, 3):
            raise DataError(
                f"background must be {BACKGROUND_SIZE}x{BACKGROUND_SIZE}x3, "
                f"got {self.background.shape}"
            )
        sphere.validate_envmap(self.gt_env)

    @property
    def n_mat(self):
        return len(self.refmaps)


def build_tuples(singles, n_mat, seed=0):
    """Combine singles into tuples of n_mat distinct materials per illumination.

    Singles are grouped by (env_id, view_id). Within a group one single is
    chosen per distinct material (seeded), the chosen list is shuffled, and
    consecutive disjoint chunks of n_mat become tuples; illuminations with
    fewer than n_mat distinct materials are skipped with a warning. Every
    tuple's background is the first chunk member's background.
    """
    if n_mat < 1:
        raise ConfigError(f"n_mat must be >= 1, got {n_mat}")
    groups = {}
    for s in singles:
        groups.setdefault((s.env_id, s.view_id), []).append(s)
    tuples = []
    for key in sorted(groups):
        group = groups[key]
        rng = np.random.default_rng((seed, 211, key[0], key[1]))
        by_mat = {}
        for s in group:
            by_mat.setdefault(s.material_id, []).append(s)
        if len(by_mat) < n_mat:
            warnings.warn(
                f"illumination env={key[0]} view={key[1]} has only "
                f"{len(by_mat)} distinct materials, need {n_mat}; skipped"
            )
            continue
        chosen = [
            pool[int(rng.integers(len(pool)))]
            for _, pool in sorted(by_mat.items())
        ]
        order = rng.permutation(len(chosen))
        for start in range(0, len(chosen) - n_mat + 1, n_mat):
            members = [chosen[i] for i in order[start : start + n_mat]]
            base = members[0]
            for m in members[1:]:
                if not np.array_equal(m.gt_env, base.gt_env):
                    raise DataError(
                        "tuple members disagree on the ground-truth environment"
                    )
            tuples.append(
                SampleTuple(
                    refmaps=[m.refmap for m in members],
                    background=base.background,
                    gt_env=base.gt_env,
                    env_id=base.env_id,
                    view_id=base.view_id,
                    shape_ids=tuple(m.shape for m in members),
                    material_ids=tuple(m.material_id for m in members),
                )
            )
    return tuples


def split_dataset(env_ids, train_fraction=0.9, seed=0):
    """Split environment ids into disjoint, exhaustive train/test lists.

    Deterministic under (env_ids, fraction, seed); both sides are non-empty
    and returned sorted.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    ids = list(env_ids)
    if len(ids) < 2:
        raise ConfigError(f"need at least 2 environments to split, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ConfigError("environment ids must be unique")
    n_train = int(np.floor(len(ids) * train_fraction))
    n_train = min(max(n_train, 1), len(ids) - 1)
    order = np.random.default_rng(seed).permutation(len(ids))
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def save_manifest(path, entries):
    """Write the tuple manifest as canonical JSON (sorted keys, 2-space
    indent, trailing newline) so re-serialization is byte-identical."""
    for e in entries:
        missing = [k for k in MANIFEST_KEYS if k not in e]
        if missing:
            raise FormatError(f"manifest entry missing keys {missing}")
    text = json.dumps({"tuples": entries}, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict) or "tuples" not in data:
        raise FormatError(f"{path}: manifest must be an object with a 'tuples' list")
    entries = data["tuples"]
    for e in entries:
        missing = [k for k in MANIFEST_KEYS if k not in e]
        if missing:
            raise FormatError(f"{path}: manifest entry missing keys {missing}")
    return entries


def save_tuple(t, root, rel_dir, env_rel, split):
    """Write a tuple's files under root/rel_dir and return its manifest entry.

    The ground-truth env is written to root/env_rel only if absent, so tuples
    sharing an illumination share one env file. Paths in the entry are
    relative to root with forward slashes.
    """
    out = os.path.join(root, rel_dir)
    os.makedirs(out, exist_ok=True)
    refmaps, masks = [], []
    for i, r in enumerate(t.refmaps):
        refmap.save_refmap(r, out, f"m{i}")
        refmaps.append(f"{rel_dir}/m{i}.refmap.png")
        masks.append(f"{rel_dir}/m{i}.refmask.png")
    refmap.save_background(t.background, out, "scene")
    env_path = os.path.join(root, env_rel)
    if not os.path.exists(env_path):
        os.makedirs(os.path.dirname(env_path), exist_ok=True)
        imageio.write_pfm(env_path, t.gt_env)
    return {
        "refmaps": refmaps,
        "masks": masks,
        "background": f"{rel_dir}/scene.bg.png",
        "gt_env": env_rel,
        "env_id": int(t.env_id),
        "view_id": int(t.view_id),
        "shape_ids": list(t.shape_ids),
        "material_ids": [int(m) for m in t.material_ids],
        "split": split,
    }


def load_tuple(entry, root):
    """Rebuild a SampleTuple from a manifest entry."""
    refmaps = []
    for rm, mk in zip(entry["refmaps"], entry["masks"]):
        d, name = os.path.split(rm)
        stem = name[: -len(".refmap.png")]
        if f"{d}/{stem}.refmask.png" != mk:
            raise FormatError(f"mask path {mk} does not pair with refmap {rm}")
        refmaps.append(refmap.load_refmap(os.path.join(root, d), stem))
    bg = imageio.read_png(os.path.join(root, entry["background"]))
    env = imageio.read_pfm(os.path.join(root, entry["gt_env"]))
    return SampleTuple(
        refmaps=refmaps,
        background=bg,
        gt_env=env,
        env_id=int(entry["env_id"]),
        view_id=int(entry.get("view_id", 0)),
        shape_ids=tuple(entry.get("shape_ids", ())),
        material_ids=tuple(entry.get("material_ids", ())),
    )


def render_single(env, env_id, view_id, shape, material, material_id, seed,
                  resolution=128):
    """Render one single-material observation under an already-rotated env."""
    rng = np.random.default_rng((seed, 307, env_id, view_id, material_id))
    g = gbuffer.gen_gbuffer(
        shape, view=gbuffer.random_rotation(rng), resolution=resolution
    )
    hdr = render.render_ibl(g, [material], env)
    ldr, _ = render.tonemap_for_env(hdr, env)
    return Single(
        env_id=env_id,
        view_id=view_id,
        shape=shape,
        material_id=material_id,
        refmap=refmap.extract_refmap(ldr, g, 0),
        background=refmap.extract_background(ldr, g, BACKGROUND_SIZE),
        gt_env=env,
    )


def generate_corpus(
    out_dir,
    n_envs,
    n_mat=3,
    views_per_env=1,
    shapes=("sphere", "torus", "superellipsoid"),
    resolution=128,
    seed=0,
    train_fraction=0.9,
):
    """Generate a full synthetic corpus and write its manifest.

    For every environment and view, a whole-texel azimuth rotation puts the
    env in the camera frame, n_mat distinct bank materials are each rendered
    on a seeded random shape/orientation, and the resulting singles become one
    tuple. Returns the manifest path.
    """
    if n_envs < 2:
        raise ConfigError(f"need at least 2 environments, got {n_envs}")
    for s in shapes:
        if s not in gbuffer.SHAPE_DEFAULTS:
            raise ConfigError(f"unknown shape {s!r}")
    bank = material_bank()
    envs = envgen.gen_env_bank(n_envs, seed)
    train_ids, test_ids = split_dataset(range(n_envs), train_fraction, seed)
    split_of = {e: "train" for e in train_ids}
    split_of.update({e: "test" for e in test_ids})

    entries = []
    for env_id in range(n_envs):
        for view_id in range(views_per_env):
            rng = np.random.default_rng((seed, 101, env_id, view_id))
            shift = int(rng.integers(envs[env_id].shape[1]))
            env_cam = sphere.rotate_y(envs[env_id], shift)
            mat_ids = rng.choice(len(bank), size=n_mat, replace=False)
            singles = []
            for mid in mat_ids:
                shape = shapes[int(rng.integers(len(shapes)))]
                singles.append(
                    render_single(
                        env_cam, env_id, view_id, shape, bank[int(mid)],
                        int(mid), seed, resolution,
                    )
                )
            for t in build_tuples(singles, n_mat, seed):
                rel = f"tuples/e{env_id:04d}_v{view_id:02d}"
                env_rel = f"envs/e{env_id:04d}_v{view_id:02d}.pfm"
                entries.append(
                    save_tuple(t, out_dir, rel, env_rel, split_of[env_id])
                )
    manifest_path = os.path.join(out_dir, "manifest.json")
    save_manifest(manifest_path, entries)
    return manifest_path
