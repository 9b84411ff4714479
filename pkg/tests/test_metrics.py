"""Tests for the evaluation protocol: dssim, eval_pair, dominant light."""

import numpy as np
import pytest

from lumen import color, envgen, metrics, sphere
from lumen.errors import DataError, DegenerateExposureError, ShapeError


def oracle_ssim(a, b):
    """Direct windowed evaluation, quadratic loops, no separability tricks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    r = np.arange(11) - 5.0
    k1 = np.exp(-(r**2) / (2.0 * 1.5**2))
    win = np.outer(k1, k1)
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for c in range(a.shape[2]):
        vals = []
        for i in range(a.shape[0] - 10):
            for j in range(a.shape[1] - 10):
                pa = a[i : i + 11, j : j + 11, c]
                pb = b[i : i + 11, j : j + 11, c]
                mu_a = (win * pa).sum()
                mu_b = (win * pb).sum()
                var_a = (win * pa * pa).sum() - mu_a**2
                var_b = (win * pb * pb).sum() - mu_b**2
                cov = (win * pa * pb).sum() - mu_a * mu_b
                vals.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                )
        scores.append(np.mean(vals))
    return float(np.mean(scores))


class TestDssim:
    def test_matches_windowed_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0.0, 1.0, (16, 20, 3))
        b = np.clip(a + rng.normal(0.0, 0.1, a.shape), 0.0, 1.0)
        assert abs(metrics.ssim(a, b) - oracle_ssim(a, b)) < 1e-10

    def test_matches_oracle_grayscale(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0.0, 1.0, (14, 14))
        b = rng.uniform(0.0, 1.0, (14, 14))
        assert abs(metrics.ssim(a, b) - oracle_ssim(a, b)) < 1e-10

    def test_self_similarity_is_zero(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.0, 1.0, (32, 64, 3))
        assert metrics.dssim(a, a) == 0.0

    def test_white_vs_black_closed_form(self):
        white = np.ones((32, 32, 3))
        black = np.zeros((32, 32, 3))
        c1 = 0.01**2
        expected = (1.0 - c1 / (1.0 + c1)) / 2.0
        assert abs(metrics.dssim(white, black) - expected) < 1e-9
        assert metrics.dssim(white, black) < 0.5

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            a = rng.uniform(0.0, 1.0, (20, 24, 3))
            b = rng.uniform(0.0, 1.0, (20, 24, 3))
            assert abs(metrics.dssim(a, b) - metrics.dssim(b, a)) <= 1e-9

    def test_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a = rng.uniform(0.0, 1.0, (16, 16))
            b = rng.uniform(0.0, 1.0, (16, 16))
            d = metrics.dssim(a, b)
            assert 0.0 <= d <= 1.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(ShapeError):
            metrics.ssim(np.zeros((16, 16)), np.zeros((16, 17)))
        with pytest.raises(ShapeError):
            metrics.ssim(np.zeros((8, 8)), np.zeros((8, 8)))
        with pytest.raises(ShapeError):
            metrics.ssim(np.zeros((4, 16, 16, 3)), np.zeros((4, 16, 16, 3)))


class TestEvalPair:
    def test_identity_scores_zero(self):
        env = envgen.gen_envmap(5)
        assert metrics.eval_pair(env, env) == 0.0

    def test_joint_scaling_invariance(self):
        env = envgen.gen_envmap(6)
        pred = envgen.gen_envmap(7)
        base = metrics.eval_pair(pred, env)
        for k in (0.125, 3.0, 1000.0):
            assert abs(metrics.eval_pair(k * pred, k * env) - base) <= 1e-9

    def test_doubled_prediction_matches_direct_evaluation(self):
        env = envgen.gen_envmap(8)
        ldr_gt, exposure = color.tonemap_percentile(env, 0.90)
        direct = metrics.dssim(
            color.srgb_encode(np.clip(2.0 * exposure * env, 0.0, 1.0)), ldr_gt
        )
        got = metrics.eval_pair(2.0 * env, env)
        assert abs(got - direct) < 1e-12
        assert got > 0.0

    def test_prediction_resampled_to_gt_grid(self):
        env = envgen.gen_envmap(9)
        rng = np.random.default_rng(10)
        pred = rng.uniform(0.0, 4.0, (64, 64, 3))
        got = metrics.eval_pair(pred, env)
        manual = metrics.eval_pair(
            sphere.resample_env(pred, env.shape[1], env.shape[0]), env
        )
        assert got == manual

    def test_degenerate_ground_truth(self):
        with pytest.raises(DegenerateExposureError):
            metrics.eval_pair(envgen.gen_envmap(11), np.zeros((32, 64, 3)))

    def test_rejects_negative_and_nonfinite(self):
        env = envgen.gen_envmap(12)
        bad = env.copy()
        bad[0, 0, 0] = -1.0
        with pytest.raises(DataError):
            metrics.eval_pair(bad, env)
        bad[0, 0, 0] = np.nan
        with pytest.raises(DataError):
            metrics.eval_pair(env, bad)


class TestDominantLight:
    def base_env(self):
        return np.full((32, 64, 3), 0.05)

    def spike(self, v, u, value=9.0):
        env = self.base_env()
        env[v, u] = value
        return env

    def test_identity(self):
        env = self.spike(10, 20)
        assert metrics.dominant_light_distance(env, env) == 0.0

    def test_one_column_shift(self):
        assert metrics.dominant_light_distance(
            self.spike(10, 21), self.spike(10, 20)
        ) == 1.0

    def test_wraparound_column(self):
        assert metrics.dominant_light_distance(
            self.spike(10, 63), self.spike(10, 0)
        ) == 1.0

    def test_row_axis_clamps(self):
        assert metrics.dominant_light_distance(
            self.spike(0, 20), self.spike(31, 20)
        ) == 31.0

    def test_euclidean_mix(self):
        d = metrics.dominant_light_distance(self.spike(10, 62), self.spike(13, 2))
        assert abs(d - 5.0) < 1e-12

    def test_tie_breaks_lexicographic(self):
        env = self.base_env()
        env[4, 7] = 9.0
        env[9, 2] = 9.0
        assert metrics.dominant_light_distance(env, self.spike(4, 7)) == 0.0

    def test_square_prediction_measured_on_gt_grid(self):
        gt = self.spike(16, 32)
        pred = np.full((64, 64, 3), 0.05)
        pred[32:34, 32] = 9.0
        assert metrics.dominant_light_distance(pred, gt) == 0.0


class TestLuminanceHistograms:
    def test_equal_total_mass_and_shared_bins(self):
        preds = [np.random.default_rng(i).uniform(0, 4, (64, 64, 3)) for i in range(3)]
        gts = [envgen.gen_envmap(20 + i) for i in range(3)]
        edges, hp, hg = metrics.luminance_histograms(preds, gts)
        assert hp.sum() == hg.sum() == 3 * 32 * 64
        assert len(edges) == 49
        ratios = edges[1:] / edges[:-1]
        assert np.allclose(ratios, ratios[0])

    def test_dark_maps_land_in_first_bin(self):
        dark = [np.zeros((32, 64, 3))]
        bright = [np.full((32, 64, 3), 2.0)]
        edges, hp, hg = metrics.luminance_histograms(dark, bright)
        assert hp[0] == 32 * 64 and hp[1:].sum() == 0
        assert hg[-1] == 32 * 64

    def test_rejects_empty_or_mismatched(self):
        with pytest.raises(DataError):
            metrics.luminance_histograms([], [])
        with pytest.raises(DataError):
            metrics.luminance_histograms(
                [np.ones((32, 64, 3))], [np.ones((32, 64, 3))] * 2
            )
