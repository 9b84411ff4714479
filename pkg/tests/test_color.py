"""Color conversions, log compression, and percentile tone mapping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumen import color
from lumen.errors import ConfigError, DegenerateExposureError


class TestSrgb:
    def test_endpoints(self):
        assert color.srgb_decode(0.0) == 0.0
        assert color.srgb_decode(1.0) == pytest.approx(1.0)
        assert color.srgb_encode(0.0) == 0.0
        assert color.srgb_encode(1.0) == pytest.approx(1.0)

    def test_half(self):
        assert color.srgb_decode(0.5) == pytest.approx(0.21404, abs=1e-5)

    def test_inverse_pair(self):
        c = np.linspace(0, 1, 1000)
        assert np.allclose(color.srgb_encode(color.srgb_decode(c)), c, atol=1e-6)
        assert np.allclose(color.srgb_decode(color.srgb_encode(c)), c, atol=1e-6)

    def test_monotone(self):
        c = np.linspace(0, 1, 513)
        assert np.all(np.diff(color.srgb_decode(c)) > 0)

    def test_out_of_range_clamps_with_warning(self):
        with pytest.warns(UserWarning):
            out = color.srgb_decode(np.array([-0.1, 1.1]))
        assert np.allclose(out, [0.0, 1.0], atol=1e-6)


class TestLab:
    def test_white(self):
        lab = color.linear_to_lab(np.ones(3))
        assert np.allclose(lab, [100, 0, 0], atol=0.1)

    def test_black(self):
        assert np.allclose(color.linear_to_lab(np.zeros(3)), [0, 0, 0], atol=1e-9)

    def test_red(self):
        lab = color.linear_to_lab(np.array([1.0, 0.0, 0.0]))
        assert np.allclose(lab, [53.24, 80.09, 67.20], atol=0.1)

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, rgb):
        rgb = np.array(rgb)
        back = color.lab_to_linear(color.linear_to_lab(rgb))
        assert np.allclose(back, rgb, atol=1e-8)


class TestLogMap:
    def test_zero(self):
        assert color.log_map(0.0, 64.0) == 0.0

    def test_anchor_maps_to_one(self):
        assert color.log_map(64.0, 64.0) == pytest.approx(1.0)

    def test_hand_value(self):
        assert color.log_map(7.0, 63.0) == pytest.approx(0.5)

    def test_bad_anchor(self):
        with pytest.raises(ConfigError):
            color.log_map(1.0, 0.0)
        with pytest.raises(ConfigError):
            color.log_unmap(0.5, -1.0)

    def test_inverse_pair(self):
        x = np.geomspace(1e-4, 64, 200)
        assert np.allclose(color.log_unmap(color.log_map(x, 64), 64), x, rtol=1e-9)


class TestLogLab:
    def test_zero_maps_to_zero(self):
        hdr = np.zeros((4, 8, 3))
        assert np.allclose(color.to_loglab(hdr, 64), 0.0, atol=1e-9)

    def test_anchor_maps_to_white(self):
        hdr = np.full((4, 8, 3), 64.0)
        ll = color.to_loglab(hdr, 64)
        assert np.allclose(ll[..., 0], 100.0, atol=0.1)
        assert np.allclose(ll[..., 1:], 0.0, atol=0.1)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        hdr = rng.random((8, 16, 3)) * 64.0
        back = color.from_loglab(color.to_loglab(hdr, 64), 64)
        assert np.max(np.abs(back - hdr)) <= 1e-3 * 64.0

    def test_monotone_in_gray(self):
        vals = np.geomspace(0.01, 60, 50)
        gray = np.stack([vals] * 3, axis=-1)[None, :, :]
        lstar = color.to_loglab(gray, 64)[0, :, 0]
        assert np.all(np.diff(lstar) > 0)


class TestTonemap:
    def test_constant_map_definition(self):
        hdr = np.full((4, 8, 3), 2.0)
        ldr, exposure = color.tonemap_percentile(hdr, 0.9)
        assert exposure == pytest.approx(0.5)
        assert np.allclose(ldr, 1.0)

    def test_same_anchor_same_output(self):
        rng = np.random.default_rng(1)
        a = rng.random((8, 16, 3)) * 5
        ldr_a, _ = color.tonemap_percentile(a, 0.9, anchor=a)
        ldr_b, _ = color.tonemap_percentile(a.copy(), 0.9, anchor=a)
        assert np.array_equal(ldr_a, ldr_b)

    def test_percentile_bright_tail_clamps(self):
        vals = np.concatenate([np.ones(90), np.full(10, 100.0)])
        hdr = np.stack([vals] * 3, axis=-1).reshape(10, 10, 3)
        ldr, exposure = color.tonemap_percentile(hdr, 0.9)
        assert exposure == pytest.approx(1.0)
        assert np.allclose(ldr[np.isclose(hdr[..., 0], 100.0)], 1.0)

    def test_scale_equivariance_power_of_two(self):
        rng = np.random.default_rng(2)
        hdr = rng.random((8, 16, 3)) * 3
        base, _ = color.tonemap_percentile(hdr, 0.9)
        for k in (0.5, 2.0, 4.0):
            scaled, _ = color.tonemap_percentile(hdr * k, 0.9)
            assert np.array_equal(scaled, base)

    def test_scale_equivariance_general(self):
        rng = np.random.default_rng(3)
        hdr = rng.random((8, 16, 3)) * 3
        base, _ = color.tonemap_percentile(hdr, 0.9)
        scaled, _ = color.tonemap_percentile(hdr * 1.7, 0.9)
        assert np.allclose(scaled, base, atol=1e-12)

    def test_black_anchor_degenerate(self):
        with pytest.raises(DegenerateExposureError):
            color.tonemap_percentile(np.zeros((4, 8, 3)), 0.9)

    def test_nearest_rank_oracle(self):
        rng = np.random.default_rng(4)
        vals = rng.random(137)
        p = 0.9
        expected = np.sort(vals)[int(np.ceil(p * vals.size)) - 1]
        assert color.percentile_nearest_rank(vals, p) == expected
