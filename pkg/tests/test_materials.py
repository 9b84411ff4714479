"""Tests for the analytic BRDF models and the seeded material bank."""

import numpy as np
import pytest

from lumen import materials
from lumen.errors import ConfigError
from lumen.materials import Material


def random_unit(rng, n=1):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class TestMaterialValidation:
    def test_albedo_above_one_rejected(self):
        with pytest.raises(ConfigError):
            Material("lambert", np.array([np.pi, np.pi, np.pi]))

    def test_energy_bound_rejected(self):
        with pytest.raises(ConfigError):
            Material("blinn-phong", np.full(3, 0.7), np.full(3, 0.4), 8.0)

    def test_negative_albedo_rejected(self):
        with pytest.raises(ConfigError):
            Material("lambert", np.array([-0.1, 0.5, 0.5]))

    def test_unknown_model_rejected(self):
        with pytest.raises(ConfigError):
            Material("phong", np.full(3, 0.5))

    def test_exponent_below_one_rejected(self):
        with pytest.raises(ConfigError):
            Material("blinn-phong", np.full(3, 0.4), np.full(3, 0.3), 0.5)

    def test_lambert_with_specular_rejected(self):
        with pytest.raises(ConfigError):
            Material("lambert", np.full(3, 0.4), np.full(3, 0.1))

    def test_valid_materials_accepted(self):
        Material("lambert", np.full(3, 0.99))
        Material("blinn-phong", np.full(3, 0.5), np.full(3, 0.5), 1.0)


class TestEvalBrdf:
    def test_lambert_constant(self):
        mat = Material("lambert", np.array([0.5, 0.25, 0.125]))
        rng = np.random.default_rng(3)
        n = np.array([0.0, 0.0, 1.0])
        for _ in range(20):
            wi = random_unit(rng)[0]
            wo = random_unit(rng)[0]
            if np.dot(wi, n) <= 0:
                continue
            f = materials.eval_brdf(mat, wi, wo, n)
            assert np.allclose(f, mat.diffuse_albedo / np.pi)

    def test_zero_below_horizon(self):
        mat = Material("blinn-phong", np.full(3, 0.4), np.full(3, 0.3), 8.0)
        n = np.array([0.0, 0.0, 1.0])
        wi = np.array([0.0, 0.0, -1.0])
        wo = np.array([0.0, 0.0, 1.0])
        assert np.all(materials.eval_brdf(mat, wi, wo, n) == 0.0)

    def test_blinn_e1_normal_incidence(self):
        # wi = wo = n makes n.h = 1: f = rho_d/pi + rho_s * 3/(2 pi)
        rho_d = np.array([0.3, 0.2, 0.1])
        rho_s = np.array([0.2, 0.3, 0.4])
        mat = Material("blinn-phong", rho_d, rho_s, 1.0)
        n = np.array([0.0, 0.0, 1.0])
        f = materials.eval_brdf(mat, n, n, n)
        expected = rho_d / np.pi + rho_s * 3.0 / (2.0 * np.pi)
        assert np.allclose(f, expected, atol=1e-12)

    def test_blinn_general_position_hand_formula(self):
        rho_d = np.array([0.2, 0.2, 0.2])
        rho_s = np.array([0.5, 0.4, 0.3])
        e = 16.0
        mat = Material("blinn-phong", rho_d, rho_s, e)
        n = np.array([0.0, 0.0, 1.0])
        wi = np.array([np.sin(0.4), 0.0, np.cos(0.4)])
        wo = np.array([-np.sin(0.3), 0.0, np.cos(0.3)])
        h = (wi + wo) / np.linalg.norm(wi + wo)
        expected = rho_d / np.pi + rho_s * (e + 2) / (2 * np.pi) * np.dot(n, h) ** e
        assert np.allclose(materials.eval_brdf(mat, wi, wo, n), expected)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(11)
        mat = Material("blinn-phong", np.full(3, 0.3), np.full(3, 0.4), 64.0)
        for _ in range(100):
            wi, wo, n = random_unit(rng, 3)
            assert np.all(materials.eval_brdf(mat, wi, wo, n) >= 0.0)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        mat = Material("blinn-phong", np.full(3, 0.2), np.full(3, 0.5), 32.0)
        wi = random_unit(rng, 40)
        wo = random_unit(rng, 40)
        n = random_unit(rng, 40)
        batch = materials.eval_brdf_batch(mat, wi, wo, n)
        for i in range(40):
            single = materials.eval_brdf(mat, wi[i], wo[i], n[i])
            assert np.allclose(batch[i], single)

    def test_opposed_directions_no_specular(self):
        mat = Material("blinn-phong", np.full(3, 0.2), np.full(3, 0.5), 8.0)
        n = np.array([0.0, 0.0, 1.0])
        wi = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
        wo = -wi
        f = materials.eval_brdf(mat, wi, wo, n)
        assert np.allclose(f, mat.diffuse_albedo / np.pi)


def spec_albedo_quadrature(exponent, view_angle, n_theta=4000, n_phi=720):
    """Numerical directional-hemispherical reflectance of the unit specular
    lobe for wo tilted view_angle off the normal. Midpoint rule."""
    n = np.array([0.0, 0.0, 1.0])
    wo = np.array([np.sin(view_angle), 0.0, np.cos(view_angle)])
    theta = (np.arange(n_theta) + 0.5) * (np.pi / 2) / n_theta
    phi = (np.arange(n_phi) + 0.5) * 2 * np.pi / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    wi = np.stack(
        [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
    )
    h = wi + wo
    h /= np.linalg.norm(h, axis=-1, keepdims=True)
    ndh = np.clip(h[..., 2], 0.0, None)
    f = (exponent + 2) / (2 * np.pi) * ndh ** exponent
    integrand = f * np.cos(tt) * np.sin(tt)
    return integrand.sum() * (np.pi / 2 / n_theta) * (2 * np.pi / n_phi)


class TestSpecularEnergy:
    @pytest.mark.parametrize("e", [1.0, 8.0, 128.0, 1024.0])
    def test_closed_form_matches_quadrature(self, e):
        num = spec_albedo_quadrature(e, 0.0)
        assert materials.specular_dir_albedo(e) == pytest.approx(num, rel=1e-3)

    def test_large_exponent_approaches_four(self):
        r = materials.specular_dir_albedo(1024.0)
        assert 3.9 < r < 4.0

    @pytest.mark.parametrize("e", [1.0, 32.0, 1024.0])
    def test_normal_viewing_is_worst_case(self, e):
        albedos = [
            spec_albedo_quadrature(e, a, n_theta=2000, n_phi=360)
            for a in np.deg2rad([0.0, 20.0, 45.0, 70.0])
        ]
        assert all(albedos[i] >= albedos[i + 1] - 1e-6 for i in range(3))

    def test_energy_factor_never_below_one(self):
        for e in (1.0, 16.0, 256.0):
            assert materials.specular_energy_factor(e) >= 1.0

    def test_discrete_cos_factor_near_one(self):
        cos_factor, _ = materials.discrete_energy_factors(1.0)
        assert cos_factor == pytest.approx(1.0, abs=0.02)


class TestMaterialBank:
    def test_size_and_determinism(self):
        bank_a = materials.material_bank(n=100, seed=77)
        bank_b = materials.material_bank(n=100, seed=77)
        assert len(bank_a) == 100
        for ma, mb in zip(bank_a, bank_b):
            assert ma.model == mb.model
            assert np.array_equal(ma.diffuse_albedo, mb.diffuse_albedo)
            assert np.array_equal(ma.specular_albedo, mb.specular_albedo)
            assert ma.exponent == mb.exponent

    def test_seed_changes_bank(self):
        a = materials.material_bank(n=20, seed=1)
        b = materials.material_bank(n=20, seed=2)
        assert any(
            not np.array_equal(x.diffuse_albedo, y.diffuse_albedo)
            for x, y in zip(a, b)
        )

    def test_both_models_present(self):
        bank = materials.material_bank(n=100, seed=77)
        models = {m.model for m in bank}
        assert models == {"lambert", "blinn-phong"}

    def test_bank_energy_safe_on_render_grid(self):
        # under a constant unit environment, the discrete quadrature bound
        # rho_d * cos_factor + rho_s * spec_factor must not exceed 1
        bank = materials.material_bank(n=100, seed=77)
        for mat in bank:
            cos_f, spec_f = materials.discrete_energy_factors(
                mat.exponent if mat.model == "blinn-phong" else 1.0
            )
            bound = mat.diffuse_albedo * cos_f
            if mat.model == "blinn-phong":
                bound = bound + mat.specular_albedo * spec_f
            assert np.all(bound <= 1.0 + 1e-9)

    def test_bank_keeps_meaningful_speculars(self):
        bank = materials.material_bank(n=100, seed=77)
        spec_max = max(m.specular_albedo.max() for m in bank)
        assert spec_max > 0.05
