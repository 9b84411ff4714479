"""The env-from-refmaps network: siamese refmap encoders, a background
encoder, and a fusing decoder, plus its training loop.

Architecture: five [conv 4x4, stride 2, pad 1, leaky-relu 0.1] stages per
encoder with channel widths base*(1,2,4,8,8), taking 128x128 normalized Lab
inputs down to a 4x4 code. The decoder mirrors them with transposed convs
4->8->16->32->64; before every decoder stage the per-level average of the
refmap pyramids is channel-concatenated (the background code, or zeros, plays
that role at 4x4). A final 1x1 conv + sigmoid yields normalized log-Lab,
rescaled to Lab ranges; radiance comes back through the inverse log map.

All refmap branches share one parameter set, so the same weights run for any
number of input maps.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import color, dataset, refmap, sphere
from .errors import ConfigError, DataError, FormatError, NumericError

OUT_SIZE = 64
IN_SIZE = 128
N_STAGES = 5
LAB_SCALE = np.array([100.0, 220.0, 220.0])
LAB_SHIFT = np.array([0.0, -110.0, -110.0])


@dataclass
class NetworkConfig:
    n_mat: int = 3
    base_channels: int = 32
    x_ref: float = color.DEFAULT_LOG_ANCHOR
    with_background: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_mat < 1:
            raise ConfigError(f"n_mat must be >= 1, got {self.n_mat}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.x_ref <= 0:
            raise ConfigError(f"x_ref must be positive, got {self.x_ref}")

    @property
    def channels(self):
        b = self.base_channels
        return (b, 2 * b, 4 * b, 8 * b, 8 * b)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 4
    momentum: float = 0.95
    weight_decay: float = 0.0005
    log10_lr_start: float = -3.0
    log10_lr_end: float = -5.0
    augment_rotations: bool = False
    cache_limit: int = 64
    max_steps: int = 0


@dataclass
class FeaturePyramid:
    """Per-stage features of one refmap encoder, finest (64x64) first."""

    levels: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.levels) != N_STAGES:
            raise ConfigError(f"pyramid needs {N_STAGES} levels")
        size = OUT_SIZE
        for lv in self.levels:
            if lv.shape[1:] != (size, size):
                raise ConfigError(
                    f"pyramid level {lv.shape} does not halve properly"
                )
            size //= 2


def lab_input(ldr):
    """128x128 LDR sRGB image -> normalized-Lab (3, 128, 128) float32."""
    ldr = np.asarray(ldr, dtype=np.float64)
    if ldr.shape != (IN_SIZE, IN_SIZE, 3):
        raise ConfigError(f"network input must be {IN_SIZE}x{IN_SIZE}x3, got {ldr.shape}")
    lab = color.linear_to_lab(color.srgb_decode(np.clip(ldr, 0.0, 1.0)))
    norm = (lab - LAB_SHIFT) / LAB_SCALE
    return np.ascontiguousarray(norm.transpose(2, 0, 1), dtype=np.float32)


def env_target(env, x_ref):
    """HDR env -> (3, 64, 64) log-Lab training target, float32."""
    grid = sphere.resample_env(env, OUT_SIZE, OUT_SIZE)
    lab = color.to_loglab(grid, x_ref)
    return np.ascontiguousarray(lab.transpose(2, 0, 1), dtype=np.float32)


class Network:
    """Parameter container plus forward passes; weights name n_mat nowhere."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._params = {}
        rng = np.random.default_rng(cfg.seed)
        chans = cfg.channels
        prefixes = ("ref", "bg") if cfg.with_background else ("ref",)
        for prefix in prefixes:
            cin = 3
            for i, cout in enumerate(chans):
                self._add_conv(rng, f"{prefix}.c{i}", cout, cin, 4)
                cin = cout
        top = chans[-1]
        dec_in = [2 * top, 2 * chans[3], 2 * chans[2], 2 * chans[1]]
        dec_out = [chans[3], chans[2], chans[1], chans[0]]
        for i, (ci, co) in enumerate(zip(dec_in, dec_out)):
            k = rng.normal(size=(ci, co, 4, 4)) * np.sqrt(2.0 / (ci * 16))
            self._params[f"dec.t{i}.k"] = ad.parameter(
                k.astype(np.float32), f"dec.t{i}.k"
            )
            self._params[f"dec.t{i}.b"] = ad.parameter(
                np.zeros(co, dtype=np.float32), f"dec.t{i}.b"
            )
        self._add_conv(rng, "out", 3, 2 * chans[0], 1)

    def _add_conv(self, rng, name, cout, cin, ksize):
        k = rng.normal(size=(cout, cin, ksize, ksize)) * np.sqrt(
            2.0 / (cin * ksize * ksize)
        )
        self._params[f"{name}.k"] = ad.parameter(k.astype(np.float32), f"{name}.k")
        self._params[f"{name}.b"] = ad.parameter(
            np.zeros(cout, dtype=np.float32), f"{name}.b"
        )

    def parameters(self):
        return list(self._params.values())

    def named_values(self):
        return {name: p.values for name, p in self._params.items()}

    def load_values(self, named):
        expected = set(self._params)
        got = set(named)
        unknown = sorted(got - expected)
        if unknown:
            raise FormatError(f"unknown tensor names in weights: {unknown}")
        missing = sorted(expected - got)
        if missing:
            raise FormatError(f"weights file lacks tensors: {missing}")
        for name, arr in named.items():
            p = self._params[name]
            if arr.shape != p.values.shape:
                raise FormatError(
                    f"tensor {name} has shape {arr.shape}, expected {p.values.shape}"
                )
            p.values = np.ascontiguousarray(arr, dtype=np.float32)

    def zero_grads(self):
        for p in self._params.values():
            p.zero_grad()

    # ------------------------------------------------------------------
    # forward passes

    def _encode(self, x_chw, prefix):
        h = ad.tensor(x_chw)
        levels = []
        for i in range(N_STAGES):
            h = ad.conv2d(h, self._params[f"{prefix}.c{i}.k"], stride=2, padding=1)
            h = ad.add_bias(h, self._params[f"{prefix}.c{i}.b"])
            h = ad.leaky_relu(h, 0.1)
            levels.append(h)
        return levels

    def encode_background(self, bg):
        """LDR 128x128 background -> its coarse (channels, 4, 4) code."""
        if not self.cfg.with_background:
            raise ConfigError("network was configured without a background branch")
        return self._encode(lab_input(bg), "bg")[-1]

    def encode_refmap(self, r):
        """RefMap -> FeaturePyramid through the shared siamese encoder."""
        return FeaturePyramid(self._encode(lab_input(r.pixels), "ref"))

    def encode_refmap_array(self, pixels):
        return FeaturePyramid(self._encode(lab_input(pixels), "ref"))

    def fuse(self, pyramids, bg_code=None):
        """Average pyramids per level, decode, return (3, 64, 64) log-Lab."""
        if not pyramids:
            raise ConfigError("fuse needs at least one pyramid")
        shapes = [tuple(lv.shape for lv in p.levels) for p in pyramids]
        if len(set(shapes)) != 1:
            raise ConfigError(f"pyramid shapes disagree: {sorted(set(shapes))}")
        avg = [
            ad.avg_n([p.levels[i] for p in pyramids]) for i in range(N_STAGES)
        ]
        if bg_code is None:
            bg_code = ad.tensor(
                np.zeros(avg[-1].shape, dtype=np.float32)
            )
        h = ad.concat_channels(avg[-1], bg_code)
        for i in range(4):
            h = ad.conv_transpose2d(
                h, self._params[f"dec.t{i}.k"], stride=2, padding=1
            )
            h = ad.add_bias(h, self._params[f"dec.t{i}.b"])
            h = ad.leaky_relu(h, 0.1)
            h = ad.concat_channels(h, avg[N_STAGES - 2 - i])
        h = ad.conv2d(h, self._params["out.k"], stride=1, padding=0)
        h = ad.add_bias(h, self._params["out.b"])
        h = ad.sigmoid(h)
        return ad.affine_channels(
            h, LAB_SCALE.astype(np.float32), LAB_SHIFT.astype(np.float32)
        )

    def predict_loglab(self, refmap_arrays, bg=None):
        pyramids = [self.encode_refmap_array(a) for a in refmap_arrays]
        bg_code = None
        if bg is not None and self.cfg.with_background:
            bg_code = self.encode_background(bg)
        return self.fuse(pyramids, bg_code)

    def predict_env(self, refmap_arrays, bg=None):
        """Refmap pixel arrays (+ optional background) -> HDR env (64,64,3)."""
        out = self.predict_loglab(refmap_arrays, bg)
        lab = out.values.astype(np.float64).transpose(1, 2, 0)
        return color.from_loglab(lab, self.cfg.x_ref)

    def forward(self, t):
        """SampleTuple -> predicted HDR environment, (64, 64, 3), >= 0."""
        if t.n_mat != self.cfg.n_mat:
            raise ConfigError(
                f"tuple has {t.n_mat} refmaps, network configured for "
                f"{self.cfg.n_mat}"
            )
        return self.predict_env(
            [r.pixels for r in t.refmaps],
            t.background if self.cfg.with_background else None,
        )


def save_network(net, path):
    ad.save_weights(path, net.named_values())


def load_network(path, cfg):
    net = Network(cfg)
    net.load_values(ad.load_weights(path))
    return net


def load_for_inference(path, n_mat, x_ref=color.DEFAULT_LOG_ANCHOR, seed=0):
    """Build a network around a weights file, inferring the channel width and
    whether a background branch exists from the stored tensors."""
    named = ad.load_weights(path)
    if "ref.c0.k" not in named:
        raise FormatError(f"{path}: not a network weights file (no ref.c0.k)")
    cfg = NetworkConfig(
        n_mat=n_mat,
        base_channels=int(named["ref.c0.k"].shape[0]),
        x_ref=x_ref,
        with_background=any(n.startswith("bg.") for n in named),
        seed=seed,
    )
    net = Network(cfg)
    net.load_values(named)
    return net


# ---------------------------------------------------------------------------
# training


def _augment(ref_arrays, env, rng):
    """Rotate env and refmaps about y by the same whole random azimuth.

    k env columns out of env_width equals k * 128 / env_width refmap columns
    (both grids span the full turn). The refmap is treated as a spherical
    texture; its sampled region rides along with the roll.
    """
    w = env.shape[1]
    k = int(rng.integers(w))
    env_rot = sphere.rotate_y(env, k)
    shift = int(round(k * refmap.REFMAP_SIZE / w))
    refs_rot = [np.roll(a, shift, axis=1) for a in ref_arrays]
    return refs_rot, env_rot


class _SampleStore:
    """Loads manifest entries into network-ready arrays, caching small sets."""

    def __init__(self, entries, root, cfg, cache_limit):
        self.entries = entries
        self.root = root
        self.cfg = cfg
        self.cache = {} if len(entries) <= cache_limit else None

    def __len__(self):
        return len(self.entries)

    def raw(self, i):
        if self.cache is not None and i in self.cache:
            return self.cache[i]
        t = dataset.load_tuple(self.entries[i], self.root)
        if t.n_mat != self.cfg.n_mat:
            raise DataError(
                f"manifest tuple has {t.n_mat} refmaps, config wants "
                f"{self.cfg.n_mat}"
            )
        item = (
            [r.pixels for r in t.refmaps],
            t.background if self.cfg.with_background else None,
            np.asarray(t.gt_env, dtype=np.float64),
        )
        if self.cache is not None:
            self.cache[i] = item
        return item

    def sample(self, i, rng=None):
        refs, bg, env = self.raw(i)
        if rng is not None:
            refs, env = _augment(refs, env, rng)
        return refs, bg, env_target(env, self.cfg.x_ref)


def train(manifest_path, cfg, hyper, out_path, log_path=None):
    """Train on a manifest's train split; returns the trained Network.

    Writes the final weights to out_path, a rolling per-epoch checkpoint next
    to it, and a CSV log (epoch, lr, train_loss, val_loss). Aborts with a
    NumericError naming epoch and step if the loss goes non-finite.
    """
    manifest_path = os.fspath(manifest_path)
    out_path = os.fspath(out_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    entries = dataset.load_manifest(manifest_path)
    train_entries = [e for e in entries if e["split"] == "train"]
    val_entries = [e for e in entries if e["split"] != "train"]
    if not train_entries:
        raise DataError(f"{manifest_path}: no tuples tagged for training")
    store = _SampleStore(train_entries, root, cfg, hyper.cache_limit)
    val_store = _SampleStore(val_entries, root, cfg, hyper.cache_limit)

    net = Network(cfg)
    params = net.parameters()
    state = ad.OptimizerState(
        params,
        total_epochs=hyper.epochs,
        momentum=hyper.momentum,
        weight_decay=hyper.weight_decay,
        log10_start=hyper.log10_lr_start,
        log10_end=hyper.log10_lr_end,
        batch_size=hyper.batch_size,
    )
    if log_path is None:
        log_path = out_path + ".log.csv"
    ckpt_path = out_path + ".ckpt"
    log_path = os.fspath(log_path)

    def batch_loss(indices, aug_rng):
        losses = []
        for i in indices:
            refs, bg, target = store.sample(i, aug_rng)
            pred = net.predict_loglab(refs, bg)
            losses.append(ad.l1_loss(pred, target))
        return ad.avg_n(losses)

    step = 0
    stop = False
    with open(log_path, "w", newline="") as logf:
        log = csv.writer(logf)
        log.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for epoch in range(hyper.epochs):
            order = np.random.default_rng((cfg.seed, 1009, epoch)).permutation(
                len(store)
            )
            aug_rng = (
                np.random.default_rng((cfg.seed, 1013, epoch))
                if hyper.augment_rotations
                else None
            )
            lr = state.learning_rate(epoch)
            epoch_losses = []
            for start in range(0, len(order), hyper.batch_size):
                batch = order[start : start + hyper.batch_size]
                net.zero_grads()
                try:
                    loss = batch_loss(batch, aug_rng)
                    ad.backward(loss)
                except NumericError as err:
                    raise NumericError(
                        f"training diverged at epoch {epoch} step {step} "
                        f"(lr {lr:.3e}): {err}"
                    ) from err
                ad.sgd_step(
                    params, [p.grad for p in params], state, epoch
                )
                epoch_losses.append(float(loss.values))
                step += 1
                if hyper.max_steps and step >= hyper.max_steps:
                    stop = True
                    break
            val_loss = ""
            if len(val_store) and not stop:
                vals = []
                try:
                    for i in range(len(val_store)):
                        refs, bg, target = val_store.sample(i)
                        pred = net.predict_loglab(refs, bg)
                        vals.append(float(ad.l1_loss(pred, target).values))
                except NumericError as err:
                    raise NumericError(
                        f"validation after epoch {epoch} produced non-finite "
                        f"values (lr {lr:.3e}): {err}"
                    ) from err
                val_loss = f"{np.mean(vals):.6f}"
            log.writerow(
                [epoch, f"{lr:.6e}", f"{np.mean(epoch_losses):.6f}", val_loss]
            )
            logf.flush()
            save_network(net, ckpt_path)
            if stop:
                break
    save_network(net, out_path)
    return net
