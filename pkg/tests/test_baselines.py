"""Tests for the baseline family and the evaluation report."""

import csv
import os

import numpy as np
import pytest

from lumen import baselines, dataset, envgen, imageio, metrics, network, sphere
from lumen.errors import ConfigError, DataError, ShapeError
from lumen.network import NetworkConfig, TrainConfig


def small_bank(n, seed=0):
    return [
        envgen.gen_envmap((seed, i), width=32, height=16) for i in range(n)
    ]


def brute_force_nn(gt, bank):
    best = None
    best_score = np.inf
    for cand in bank:
        for s in range(np.asarray(cand).shape[1]):
            rolled = sphere.rotate_y(cand, s)
            score = metrics.eval_pair(rolled, gt)
            if score < best_score:
                best_score = score
                best = rolled
    return np.array(best), float(best_score)


class TestNNOracle:
    def test_gt_in_bank_scores_zero(self):
        bank = small_bank(4, seed=1)
        best, score = baselines.nn_oracle(bank[2], bank)
        assert score == 0.0
        assert np.array_equal(best, bank[2])

    def test_rotated_member_recovered(self):
        bank = small_bank(4, seed=2)
        gt = sphere.rotate_y(bank[1], 11)
        best, score = baselines.nn_oracle(gt, bank)
        assert score == 0.0
        assert np.array_equal(best, gt)

    def test_matches_exhaustive_search(self):
        bank = small_bank(5, seed=3)
        gt = envgen.gen_envmap((3, 99), width=32, height=16)
        best, score = baselines.nn_oracle(gt, bank)
        want_best, want_score = brute_force_nn(gt, bank)
        assert score == want_score
        assert np.array_equal(best, want_best)

    def test_mixed_resolution_bank(self):
        bank = [
            envgen.gen_envmap((4, 0), width=32, height=16),
            envgen.gen_envmap((4, 1), width=64, height=32),
        ]
        gt = envgen.gen_envmap((4, 7), width=32, height=16)
        best, score = baselines.nn_oracle(gt, bank)
        want_best, want_score = brute_force_nn(gt, bank)
        assert score == want_score
        assert np.array_equal(best, want_best)

    def test_empty_bank(self):
        with pytest.raises(DataError):
            baselines.nn_oracle(small_bank(1)[0], [])


class TestMaskAwareMean:
    def test_equal_coverages_is_plain_average(self):
        rng = np.random.default_rng(5)
        a, b = rng.uniform(0, 4, (2, 16, 32, 3))
        out = baselines.mask_aware_mean([a, b], [0.5, 0.5])
        assert np.allclose(out, (a + b) / 2, atol=1e-12)

    def test_zero_weight_drops_a_map(self):
        rng = np.random.default_rng(6)
        a, b = rng.uniform(0, 4, (2, 16, 32, 3))
        out = baselines.mask_aware_mean([a, b], [1.0, 0.0])
        assert np.array_equal(out, a)

    def test_hand_weighted_value(self):
        a = np.full((8, 16, 3), 1.0)
        b = np.full((8, 16, 3), 5.0)
        out = baselines.mask_aware_mean([a, b], [0.2, 0.6])
        assert np.allclose(out, 4.0, atol=1e-12)

    def test_all_zero_coverages_fall_back_to_unweighted(self):
        rng = np.random.default_rng(7)
        maps = list(rng.uniform(0, 4, (3, 8, 16, 3)))
        out = baselines.mask_aware_mean(maps, [0.0, 0.0, 0.0])
        assert np.allclose(out, np.mean(maps, axis=0), atol=1e-12)

    def test_idempotent_on_copies(self):
        m = np.random.default_rng(8).uniform(0, 4, (8, 16, 3))
        out = baselines.mask_aware_mean([m, m.copy(), m.copy()], [0.7, 0.2, 0.4])
        assert np.allclose(out, m, rtol=1e-12)
        exact = baselines.mask_aware_mean([m, m.copy()], [1.0, 1.0])
        assert np.array_equal(exact, m)

    def test_rejects_bad_inputs(self):
        with pytest.raises(DataError):
            baselines.mask_aware_mean([], [])
        m = np.ones((8, 16, 3))
        with pytest.raises(ShapeError):
            baselines.mask_aware_mean([m], [0.5, 0.5])
        with pytest.raises(DataError):
            baselines.mask_aware_mean([m, m], [0.5, -0.1])


class TestBestOfSinglets:
    def test_single_candidate(self):
        m = envgen.gen_envmap((9, 0), width=32, height=16)
        gt = envgen.gen_envmap((9, 1), width=32, height=16)
        best, score = baselines.best_of_singlets([m], gt)
        assert np.array_equal(best, m)
        assert score == metrics.eval_pair(m, gt)

    def test_exact_match_wins(self):
        gt = envgen.gen_envmap((10, 0), width=32, height=16)
        other = envgen.gen_envmap((10, 1), width=32, height=16)
        best, score = baselines.best_of_singlets([other, gt], gt)
        assert score == 0.0
        assert np.array_equal(best, gt)

    def test_matches_exhaustive_argmin(self):
        preds = small_bank(3, seed=11)
        gt = envgen.gen_envmap((11, 50), width=32, height=16)
        scores = [metrics.eval_pair(p, gt) for p in preds]
        best, score = baselines.best_of_singlets(preds, gt)
        k = int(np.argmin(scores))
        assert score == scores[k]
        assert np.array_equal(best, preds[k])

    def test_empty(self):
        with pytest.raises(DataError):
            baselines.best_of_singlets([], np.ones((16, 32, 3)))


@pytest.fixture(scope="module")
def trained_setup(tmp_path_factory):
    """Two tiny corpora (pair and singlet tuples) and four trained models."""
    root = tmp_path_factory.mktemp("eval")
    pair_dir = str(root / "pairs")
    single_dir = str(root / "singles")
    pair_manifest = dataset.generate_corpus(
        pair_dir, n_envs=4, n_mat=2, views_per_env=1, resolution=48, seed=7
    )
    single_manifest = dataset.generate_corpus(
        single_dir, n_envs=4, n_mat=1, views_per_env=1, resolution=48, seed=7
    )
    hyper = TrainConfig(
        epochs=1, batch_size=2, log10_lr_start=-2.0, log10_lr_end=-2.0
    )
    bank = {}
    specs = {
        "singlet": (single_manifest, 1, False),
        "singlet-bg": (single_manifest, 1, True),
        "tuple": (pair_manifest, 2, False),
        "tuple-bg": (pair_manifest, 2, True),
    }
    for key, (manifest, n_mat, with_bg) in specs.items():
        cfg = NetworkConfig(
            n_mat=n_mat, base_channels=4, with_background=with_bg, seed=3
        )
        out = str(root / f"{key}.lmw")
        network.train(manifest, cfg, hyper, out)
        bank[key] = out
    return pair_manifest, bank


class TestRunTable:
    def test_full_family(self, trained_setup, tmp_path):
        manifest, bank = trained_setup
        out_dir = str(tmp_path / "report")
        report = baselines.run_table(
            list(baselines.TABLE_VARIANTS), manifest, bank, out_dir=out_dir
        )
        assert report.variants == baselines.TABLE_VARIANTS
        assert report.n_samples >= 1
        for v in report.variants:
            scores = report.per_sample[v]
            assert len(scores) == report.n_samples
            assert all(0.0 <= s <= 1.0 for s in scores)
            mean, sem = report.means[v]
            arr = np.asarray(scores)
            assert mean == pytest.approx(arr.mean())
            if arr.size > 1:
                assert sem == pytest.approx(arr.std(ddof=1) / np.sqrt(arr.size))
            assert len(report.light_distances[v]) == report.n_samples
        edges, hp, hg = report.histograms
        assert hp.sum() == hg.sum()
        with open(os.path.join(out_dir, "table.csv")) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["variant", "n", "mean_dssim", "sem"]
        assert [r[0] for r in rows[1:]] == list(baselines.TABLE_VARIANTS)
        for r in rows[1:]:
            v = r[0]
            assert float(r[2]) == pytest.approx(report.means[v][0], abs=1e-6)
        with open(os.path.join(out_dir, "sparsity.csv")) as f:
            srows = list(csv.reader(f))
        assert len(srows) == 1 + 2 * report.n_samples
        sheet = imageio.read_png(os.path.join(out_dir, "comparison.png"))
        assert sheet.ndim == 3 and sheet.shape[2] == 3
        n_tiles = 1 + len(report.variants)
        assert sheet.shape[1] == n_tiles * 64 + 2 * (n_tiles - 1)

    def test_variant_order_is_canonical_and_deduped(self, trained_setup):
        manifest, bank = trained_setup
        report = baselines.run_table(
            ["tuple", "singlet", "tuple", "best-of-singlets"], manifest, bank
        )
        assert report.variants == ("singlet", "best-of-singlets", "tuple")

    def test_deterministic(self, trained_setup):
        manifest, bank = trained_setup
        a = baselines.run_table(["tuple-bg", "nn"], manifest, bank)
        b = baselines.run_table(["tuple-bg", "nn"], manifest, bank)
        assert a.per_sample == b.per_sample

    def test_missing_weights_rejected(self, trained_setup):
        manifest, bank = trained_setup
        with pytest.raises(ConfigError, match="singlet"):
            baselines.run_table(["singlet"], manifest, {"tuple": bank["tuple"]})

    def test_unknown_variant_rejected(self, trained_setup):
        manifest, bank = trained_setup
        with pytest.raises(ConfigError, match="duplet"):
            baselines.run_table(["duplet"], manifest, bank)
        with pytest.raises(ConfigError):
            baselines.run_table([], manifest, bank)

    def test_no_test_tuples_rejected(self, trained_setup, tmp_path):
        manifest, bank = trained_setup
        entries = dataset.load_manifest(manifest)
        for e in entries:
            e["split"] = "train"
        alt = str(tmp_path / "manifest.json")
        dataset.save_manifest(alt, entries)
        import shutil

        root = os.path.dirname(manifest)
        for sub in ("tuples", "envs"):
            shutil.copytree(os.path.join(root, sub), str(tmp_path / sub))
        with pytest.raises(DataError, match="test"):
            baselines.run_table(["tuple"], alt, bank)


class TestMaterialSweep:
    def test_sweep_matches_tuple_variant_at_full_count(self, trained_setup, tmp_path):
        manifest, bank = trained_setup
        out_csv = str(tmp_path / "sweep.csv")
        results = baselines.material_sweep(
            bank["tuple"], manifest, out_csv=out_csv
        )
        assert sorted(results) == [1, 2]
        report = baselines.run_table(["tuple"], manifest, bank)
        mean, sem = report.means["tuple"]
        assert results[2][0] == pytest.approx(mean)
        assert results[2][1] == pytest.approx(sem)
        with open(out_csv) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["n_mat", "n", "mean_dssim", "sem"]
        assert [r[0] for r in rows[1:]] == ["1", "2"]

    def test_background_branch_detected_from_weights(self, trained_setup):
        manifest, bank = trained_setup
        with_bg = baselines.material_sweep(bank["tuple-bg"], manifest)
        without = baselines.material_sweep(bank["tuple"], manifest)
        assert with_bg[2][0] != without[2][0]

    def test_counts_out_of_range(self, trained_setup):
        manifest, bank = trained_setup
        with pytest.raises(ConfigError):
            baselines.material_sweep(bank["tuple"], manifest, counts=(3,))
        with pytest.raises(ConfigError):
            baselines.material_sweep(bank["tuple"], manifest, counts=(0,))
