"""Batch command-line interface.

Subcommands: gen-data, extract, train, predict, eval, relight, selftest.
Every run resolves its configuration (flags plus the seed, which falls back
to the LUMEN_SEED environment variable, then 0) and writes it as JSON next
to its outputs. Failures print one machine-readable JSON line on stderr and
exit 2 (usage), 3 (data/config/format errors), or 4 (numeric failures).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import baselines, color, dataset, gbuffer, imageio, materials
from . import metrics, network, refmap, render, sphere
from .errors import ConfigError, LumenError, NumericError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("LUMEN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"LUMEN_SEED must be an integer, got {env!r}")
    return 0


def _limit_threads(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _write_config(args, seed, path):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["seed"] = seed
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


def _split_stem(path, suffix):
    if path.endswith(suffix):
        path = path[: -len(suffix)]
    d, stem = os.path.split(path)
    return d or ".", stem


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args):
    seed = _resolve_seed(args)
    _write_config(args, seed, os.path.join(args.out_dir, "config.json"))
    manifest = dataset.generate_corpus(
        args.out_dir,
        n_envs=args.n_envs,
        n_mat=args.n_mat,
        views_per_env=args.views,
        shapes=tuple(args.shapes),
        resolution=args.resolution,
        seed=seed,
        train_fraction=args.train_fraction,
    )
    print(manifest)
    return EXIT_OK


def cmd_extract(args):
    seed = _resolve_seed(args)
    out_dir, out_stem = _split_stem(args.out_stem, ".refmap.png")
    _write_config(
        args, seed, os.path.join(out_dir, f"{out_stem}.config.json")
    )
    g_dir, g_stem = _split_stem(args.gbuffer_stem, ".normal.pfm")
    g = gbuffer.load_gbuffer(g_dir, g_stem)
    img = imageio.read_png(args.image)
    r = refmap.extract_refmap(img, g, args.material)
    os.makedirs(out_dir, exist_ok=True)
    refmap.save_refmap(r, out_dir, out_stem)
    print(os.path.join(out_dir, f"{out_stem}.refmap.png"))
    if args.background:
        bg = refmap.extract_background(img, g)
        refmap.save_background(bg, out_dir, out_stem)
        print(os.path.join(out_dir, f"{out_stem}.bg.png"))
    return EXIT_OK


def cmd_train(args):
    seed = _resolve_seed(args)
    _write_config(args, seed, args.out + ".config.json")
    cfg = network.NetworkConfig(
        n_mat=args.n_mat,
        base_channels=args.base_channels,
        x_ref=args.x_ref,
        with_background=not args.no_background,
        seed=seed,
    )
    hyper = network.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        log10_lr_start=args.lr_start,
        log10_lr_end=args.lr_end,
        augment_rotations=args.augment,
        max_steps=args.max_steps,
    )
    network.train(args.manifest, cfg, hyper, args.out)
    print(args.out)
    return EXIT_OK


def cmd_predict(args):
    seed = _resolve_seed(args)
    _write_config(args, seed, args.out + ".config.json")
    arrays = []
    for path in args.refmaps:
        d, stem = _split_stem(path, ".refmap.png")
        arrays.append(refmap.load_refmap(d, stem).pixels)
    net = network.load_for_inference(
        args.weights, len(arrays), x_ref=args.x_ref
    )
    bg = imageio.read_png(args.bg) if args.bg else None
    env = net.predict_env(arrays, bg)
    imageio.write_pfm(args.out, env)
    print(args.out)
    ldr, _ = color.tonemap_percentile(env, metrics.ANCHOR_PERCENTILE)
    png_path = os.path.splitext(args.out)[0] + ".png"
    imageio.write_png(png_path, ldr)
    print(png_path)
    return EXIT_OK


def cmd_eval(args):
    seed = _resolve_seed(args)
    _write_config(args, seed, os.path.join(args.out, "config.json"))
    bank = {}
    for key in ("singlet", "singlet-bg", "tuple", "tuple-bg"):
        path = os.path.join(args.weights_dir, f"{key}.lmw")
        if os.path.exists(path):
            bank[key] = path
    report = baselines.run_table(
        args.variants,
        args.manifest,
        bank,
        out_dir=args.out,
        x_ref=args.x_ref,
        max_sheet_rows=args.max_sheet_rows,
    )
    for v in report.variants:
        mean, sem = report.means[v]
        print(f"{v}: {mean:.4f} +/- {sem:.4f} (n={report.n_samples})")
    return EXIT_OK


def cmd_relight(args):
    seed = _resolve_seed(args)
    _write_config(args, seed, args.out + ".config.json")
    env = imageio.read_pfm(args.env)
    sphere.validate_envmap(env)
    if env.shape[0] > render.MAX_ENV_HEIGHT:
        env = sphere.resample_env(
            env, 2 * render.MAX_ENV_HEIGHT, render.MAX_ENV_HEIGHT
        )
    bank = materials.material_bank()
    if not 0 <= args.material < len(bank):
        raise ConfigError(
            f"material id {args.material} outside the bank 0..{len(bank) - 1}"
        )
    g = gbuffer.gen_gbuffer(args.shape, resolution=args.resolution)
    hdr = render.render_ibl(g, [bank[args.material]], env)
    ldr = render.tonemap_for_env(hdr, env)[0]
    imageio.write_png(args.out, ldr)
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def _selftest_checks():
    rng = np.random.default_rng(0)

    def solid_angles():
        total = sphere.row_solid_angles(64, 32).sum() * 64
        assert abs(total - 4.0 * np.pi) / (4.0 * np.pi) <= 1e-4

    def unit_directions():
        dirs = sphere.texel_grid_dirs(64, 32)
        assert np.allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)

    def pfm_round_trip(tmp):
        img = rng.uniform(0, 8, (9, 14, 3)).astype(np.float32).astype(np.float64)
        p1 = os.path.join(tmp, "a.pfm")
        p2 = os.path.join(tmp, "b.pfm")
        imageio.write_pfm(p1, img)
        imageio.write_pfm(p2, imageio.read_pfm(p1))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def png_round_trip(tmp):
        img = rng.uniform(0, 1, (8, 8, 3))
        p1 = os.path.join(tmp, "a.png")
        p2 = os.path.join(tmp, "b.png")
        imageio.write_png(p1, img)
        imageio.write_png(p2, imageio.read_png(p1))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def weights_round_trip(tmp):
        from . import autodiff as ad

        named = {"a.k": rng.normal(size=(2, 3)).astype(np.float32),
                 "b": np.float32(1.5).reshape(())}
        p1 = os.path.join(tmp, "a.lmw")
        p2 = os.path.join(tmp, "b.lmw")
        ad.save_weights(p1, named)
        ad.save_weights(p2, ad.load_weights(p1))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def manifest_round_trip(tmp):
        entry = {
            "refmaps": ["t/m0.refmap.png"], "masks": ["t/m0.refmask.png"],
            "background": "t/scene.bg.png", "gt_env": "envs/e.pfm",
            "env_id": 0, "split": "train",
        }
        p1 = os.path.join(tmp, "a.json")
        p2 = os.path.join(tmp, "b.json")
        dataset.save_manifest(p1, [entry])
        dataset.save_manifest(p2, dataset.load_manifest(p1))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def dssim_properties():
        a = rng.uniform(0, 1, (16, 24, 3))
        b = rng.uniform(0, 1, (16, 24, 3))
        assert metrics.dssim(a, a) == 0.0
        assert abs(metrics.dssim(a, b) - metrics.dssim(b, a)) <= 1e-9
        assert 0.0 <= metrics.dssim(a, b) <= 1.0

    def protocol_scaling():
        from . import envgen

        gt = envgen.gen_envmap(1)
        pred = envgen.gen_envmap(2)
        assert metrics.eval_pair(gt, gt) == 0.0
        base = metrics.eval_pair(pred, gt)
        assert abs(metrics.eval_pair(7 * pred, 7 * gt) - base) <= 1e-9

    def conv_gradient():
        from . import autodiff as ad

        x = ad.tensor(rng.normal(size=(2, 6, 6)).astype(np.float32),
                      requires_grad=True)
        k = ad.parameter(rng.normal(size=(3, 2, 3, 3)).astype(np.float32), "k")
        tgt = rng.normal(size=(3, 6, 6)).astype(np.float32)

        def loss_val():
            return float(
                ad.l1_loss(ad.conv2d(x, k, stride=1, padding=1), tgt).values
            )

        x.zero_grad()
        k.zero_grad()
        ad.backward(ad.l1_loss(ad.conv2d(x, k, stride=1, padding=1), tgt))
        h = 1e-2
        flat_idx = (1, 0, 2, 2)
        orig = k.values[flat_idx]
        k.values[flat_idx] = orig + h
        up = loss_val()
        k.values[flat_idx] = orig - h
        down = loss_val()
        k.values[flat_idx] = orig
        fd = (up - down) / (2 * h)
        an = k.grad[flat_idx]
        assert abs(an - fd) / max(abs(an), abs(fd), 1e-3) < 1e-3

    def network_permutation():
        net = network.Network(
            network.NetworkConfig(n_mat=3, base_channels=4, seed=1)
        )
        front = refmap.front_hemisphere_mask(refmap.REFMAP_SIZE)
        refs = []
        for i in range(3):
            px = np.zeros((128, 128, 3))
            px[front] = np.random.default_rng(i).uniform(
                0, 1, (int(front.sum()), 3)
            )
            refs.append(px)
        a = net.predict_loglab(refs, None).values
        b = net.predict_loglab([refs[2], refs[0], refs[1]], None).values
        assert np.abs(a - b).max() <= 1e-5

    def render_linearity():
        from . import envgen

        env = envgen.gen_envmap(3, width=32, height=16)
        g = gbuffer.gen_gbuffer("sphere", resolution=32)
        mat = materials.material_bank(n=4, seed=5)[0]
        one = render.render_ibl(g, [mat], env)
        two = render.render_ibl(g, [mat], 2.0 * env)
        assert np.allclose(two, 2.0 * one, rtol=1e-12, atol=1e-12)

    return [
        ("solid-angle-sum", solid_angles),
        ("unit-directions", unit_directions),
        ("pfm-round-trip", pfm_round_trip),
        ("png-round-trip", png_round_trip),
        ("weights-round-trip", weights_round_trip),
        ("manifest-round-trip", manifest_round_trip),
        ("dssim-properties", dssim_properties),
        ("protocol-scaling", protocol_scaling),
        ("conv-gradient", conv_gradient),
        ("network-permutation", network_permutation),
        ("render-linearity", render_linearity),
    ]


def cmd_selftest(args):
    import inspect
    import tempfile

    passed = 0
    failed = 0
    with tempfile.TemporaryDirectory() as tmp:
        for name, fn in _selftest_checks():
            try:
                if inspect.signature(fn).parameters:
                    fn(tmp)
                else:
                    fn()
            except Exception as err:  # noqa: BLE001 - report, don't crash
                failed += 1
                print(f"FAIL {name}: {err}")
            else:
                passed += 1
                print(f"PASS {name}")
    print(f"{passed} passed, {failed} failed")
    if failed:
        print(
            json.dumps(
                {"category": "data", "error": "SelftestFailure",
                 "message": f"{failed} selftest checks failed"}
            ),
            file=sys.stderr,
        )
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed (falls back to LUMEN_SEED, then 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="cap numeric thread pools (1 = deterministic)")

    parser = argparse.ArgumentParser(
        prog="lumen",
        description="Predict panoramic HDR illumination from partial "
                    "reflectance maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common],
                       help="generate a synthetic training corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-envs", type=int, required=True)
    p.add_argument("--n-mat", type=int, default=3)
    p.add_argument("--views", type=int, default=1)
    p.add_argument("--shapes", nargs="+",
                   default=["sphere", "torus", "superellipsoid"])
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("extract", parents=[common],
                       help="extract a refmap from a render plus G-buffer")
    p.add_argument("--image", required=True, help="rendered LDR PNG")
    p.add_argument("--gbuffer-stem", required=True,
                   help="path stem of the .normal/.matid/.mask PFM triplet")
    p.add_argument("--material", type=int, required=True)
    p.add_argument("--out-stem", required=True)
    p.add_argument("--background", action="store_true",
                   help="also write the blurred background image")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train a network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-mat", type=int, required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--out", required=True, help="output weights path (.lmw)")
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--x-ref", type=float, default=color.DEFAULT_LOG_ANCHOR)
    p.add_argument("--no-background", action="store_true")
    p.add_argument("--lr-start", type=float, default=-3.0,
                   help="log10 of the initial learning rate")
    p.add_argument("--lr-end", type=float, default=-5.0)
    p.add_argument("--augment", action="store_true",
                   help="random whole-texel azimuth rotations")
    p.add_argument("--max-steps", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common],
                       help="predict an environment map from refmaps")
    p.add_argument("--weights", required=True)
    p.add_argument("--refmaps", nargs="+", required=True,
                   help="refmap stems or .refmap.png paths")
    p.add_argument("--bg", default=None, help="background PNG")
    p.add_argument("--out", required=True, help="output PFM path")
    p.add_argument("--x-ref", type=float, default=color.DEFAULT_LOG_ANCHOR)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common],
                       help="score baseline variants on a test split")
    p.add_argument("--weights-dir", required=True,
                   help="directory holding singlet/singlet-bg/tuple/"
                        "tuple-bg .lmw files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variants", nargs="+",
                   default=list(baselines.TABLE_VARIANTS))
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--x-ref", type=float, default=color.DEFAULT_LOG_ANCHOR)
    p.add_argument("--max-sheet-rows", type=int, default=6)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("relight", parents=[common],
                       help="render a shape under an environment map")
    p.add_argument("--env", required=True, help="environment PFM")
    p.add_argument("--shape", default="sphere",
                   choices=sorted(gbuffer.SHAPE_DEFAULTS))
    p.add_argument("--material", type=int, required=True,
                   help="index into the analytic material bank")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("selftest", parents=[common],
                       help="run the built-in invariant checks")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        _limit_threads(args.threads)
        return args.func(args)
    except NumericError as err:
        _report_failure("numeric", err)
        return EXIT_NUMERIC
    except (LumenError, FileNotFoundError, OSError) as err:
        _report_failure("data", err)
        return EXIT_DATA


def _report_failure(category, err):
    print(
        json.dumps(
            {"category": category, "error": type(err).__name__,
             "message": str(err)}
        ),
        file=sys.stderr,
    )
