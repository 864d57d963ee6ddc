"""Degradation machinery: kernel families, noise conventions, replayable plans."""

import math

import numpy as np
import pytest

from gstdeblur.degrade import (
    KERNEL_FAMILIES,
    PIPELINE_SIZES,
    KernelSpec,
    NoiseSpec,
    add_noise,
    apply_plan,
    make_kernel,
    make_pair_firstorder,
    piecewise_smooth_image,
    replay_firstorder,
    replay_second_order,
    sample_second_order_plan,
    second_order_pipeline,
    substream,
)
from gstdeblur.errors import CodecUnavailableError, DimensionError, ValidationError
from gstdeblur.grids import convolve, gaussian_kernel


class TestKernelSpec:
    def test_validation(self):
        with pytest.raises(ValidationError):
            KernelSpec("box", 5)
        with pytest.raises(DimensionError):
            KernelSpec("iso-gaussian", 6)
        with pytest.raises(ValidationError):
            KernelSpec("iso-gaussian", 5, sigma_x=0.0)
        with pytest.raises(ValidationError):
            KernelSpec("plateau", 5, beta=0.0)
        with pytest.raises(ValidationError):
            KernelSpec("sinc", 5, cutoff=4.0)

    def test_iso_ties_sigmas(self):
        spec = KernelSpec("iso-gaussian", 5, sigma_x=1.3, sigma_y=9.0)
        assert spec.sigma_y == 1.3


class TestMakeKernel:
    def test_every_family_has_unit_sum(self):
        specs = [
            KernelSpec("iso-gaussian", 9, sigma_x=1.5),
            KernelSpec("aniso-gaussian", 9, sigma_x=2.0, sigma_y=0.8, angle=0.7),
            KernelSpec("generalized-gaussian", 9, sigma_x=1.2, beta=1.1),
            KernelSpec("plateau", 9, sigma_x=1.0, beta=1.5),
            KernelSpec("sinc", 9, cutoff=2.0),
        ]
        assert {s.family for s in specs} == set(KERNEL_FAMILIES)
        for spec in specs:
            k = make_kernel(spec)
            assert k.shape == (9, 9)
            assert k.sum() == pytest.approx(1.0, abs=1e-12)

    def test_iso_gaussian_matches_reference(self):
        np.testing.assert_allclose(
            make_kernel(KernelSpec("iso-gaussian", 9, sigma_x=1.5)),
            gaussian_kernel(9, 1.5),
            atol=1e-15,
        )

    def test_generalized_gaussian_beta_two_is_gaussian(self):
        np.testing.assert_allclose(
            make_kernel(KernelSpec("generalized-gaussian", 7, sigma_x=1.2, beta=2.0)),
            gaussian_kernel(7, 1.2),
            atol=1e-14,
        )

    def test_aniso_angle_symmetry(self):
        # rotating by pi flips nothing for a centered ellipse
        a = make_kernel(KernelSpec("aniso-gaussian", 9, sigma_x=2.0, sigma_y=0.7, angle=0.4))
        b = make_kernel(KernelSpec("aniso-gaussian", 9, sigma_x=2.0, sigma_y=0.7,
                                   angle=0.4 + math.pi))
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert not np.allclose(a, a.T)

    def test_sinc_rings_negative(self):
        k = make_kernel(KernelSpec("sinc", 15, cutoff=math.pi))
        assert k.min() < 0.0
        assert k.sum() == pytest.approx(1.0, abs=1e-12)

    def test_plateau_positive_everywhere(self):
        assert make_kernel(KernelSpec("plateau", 9, sigma_x=1.0, beta=1.2)).min() > 0.0

    def test_shaped_families_are_radial(self):
        # one width parameter: the profile must be rotation symmetric
        for family, beta in (("generalized-gaussian", 1.3), ("plateau", 1.7)):
            k = make_kernel(KernelSpec(family, 9, sigma_x=2.1, beta=beta))
            np.testing.assert_allclose(k, k.T, atol=1e-14)
            np.testing.assert_allclose(k, k[::-1, :], atol=1e-14)


class TestNoise:
    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            NoiseSpec("salt", 10.0)
        with pytest.raises(ValidationError):
            NoiseSpec("gaussian", 0.0)

    def test_gaussian_level_convention(self):
        x = np.full((200, 200), 0.5)
        out = add_noise(x, NoiseSpec("gaussian", 10.0), substream(1, 0))
        assert float(np.std(out - x)) == pytest.approx(10.0 / 255.0, rel=0.05)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_gray_gaussian_shares_field_across_channels(self):
        x = np.full((32, 32, 3), 0.5)
        out = add_noise(x, NoiseSpec("gaussian", 10.0, gray=True), substream(2, 0))
        np.testing.assert_array_equal(out[:, :, 0], out[:, :, 1])
        np.testing.assert_array_equal(out[:, :, 0], out[:, :, 2])
        out2 = add_noise(x, NoiseSpec("gaussian", 10.0, gray=False), substream(2, 0))
        assert not np.array_equal(out2[:, :, 0], out2[:, :, 1])

    def test_poisson_scaling(self):
        # stronger levels mean fewer counts and rougher output
        x = np.full((100, 100), 0.5)
        weak = add_noise(x, NoiseSpec("poisson", 0.05), substream(3, 0))
        strong = add_noise(x, NoiseSpec("poisson", 3.0), substream(3, 1))
        assert np.std(strong - x) > np.std(weak - x)

    def test_deterministic_given_stream(self):
        x = np.linspace(0, 1, 64).reshape(8, 8)
        a = add_noise(x, NoiseSpec("gaussian", 20.0), substream(7, 0))
        b = add_noise(x, NoiseSpec("gaussian", 20.0), substream(7, 0))
        np.testing.assert_array_equal(a, b)


class TestSubstream:
    def test_keyed_independence(self):
        a = substream(42, 0).uniform(size=8)
        b = substream(42, 0).uniform(size=8)
        c = substream(42, 1).uniform(size=8)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestFirstOrder:
    def test_noiseless_pair_is_exact_convolution(self, toy_problem):
        u = toy_problem["u_gt"]
        g, k, manifest = make_pair_firstorder(u, substream(5, 0), kernel_size=9)
        np.testing.assert_array_equal(g, convolve(u, k))
        assert manifest["mode"] == "first-order"
        assert manifest["noise_seed"] is None
        assert 0.2 <= manifest["kernel"]["sigma"] <= 4.0

    def test_replay_bit_identical(self, toy_problem):
        u = toy_problem["u_gt"]
        g, k, manifest = make_pair_firstorder(
            u, substream(6, 0), noise_std=0.01, kernel_size=9
        )
        g2, k2 = replay_firstorder(u, manifest)
        np.testing.assert_array_equal(g, g2)
        np.testing.assert_array_equal(k, k2)

    def test_validation(self, toy_problem):
        with pytest.raises(ValidationError):
            make_pair_firstorder(toy_problem["u_gt"], substream(0, 0),
                                 sigma_range=(2.0, 1.0))
        with pytest.raises(ValidationError):
            make_pair_firstorder(toy_problem["u_gt"], substream(0, 0),
                                 noise_std=-0.1)


class TestSecondOrderPlan:
    def test_structure(self):
        plan = sample_second_order_plan(substream(11, 0))
        steps = plan["steps"]
        assert steps[0]["step"] == "blur" and steps[0]["pass"] == 1
        assert steps[1]["step"] == "noise" and steps[1]["pass"] == 1
        kinds = [(s["step"], s.get("pass")) for s in steps]
        assert ("noise", 2) in kinds
        assert all(s["step"] in ("blur", "noise") for s in steps)
        for s in steps:
            if s["step"] == "blur":
                assert s["kernel"]["size"] in PIPELINE_SIZES
            else:
                assert "seed" in s

    def test_jpeg_flag_adds_step(self):
        plan = sample_second_order_plan(substream(11, 0), jpeg=True)
        assert any(s["step"] == "jpeg" for s in plan["steps"])
        q = next(s["quality"] for s in plan["steps"] if s["step"] == "jpeg")
        assert 30 <= q <= 95

    def test_jpeg_without_codec_raises(self, toy_problem):
        plan = {"schema": 1, "mode": "second-order",
                "steps": [{"step": "jpeg", "quality": 80}]}
        with pytest.raises(CodecUnavailableError):
            apply_plan(toy_problem["u_gt"], plan)

    def test_jpeg_codec_hook_is_called(self, toy_problem):
        calls = []

        def codec(img, quality):
            calls.append(quality)
            return img

        plan = {"schema": 1, "mode": "second-order",
                "steps": [{"step": "jpeg", "quality": 55}]}
        apply_plan(toy_problem["u_gt"], plan, jpeg_codec=codec)
        assert calls == [55]

    def test_unknown_step_rejected(self, toy_problem):
        plan = {"schema": 1, "mode": "second-order", "steps": [{"step": "warp"}]}
        with pytest.raises(ValidationError):
            apply_plan(toy_problem["u_gt"], plan)


class TestSecondOrderPipeline:
    def test_deterministic_and_replayable(self, toy_problem):
        u = toy_problem["u_gt"]
        g1, m1 = second_order_pipeline(u, master_seed=99, index=3)
        g2, m2 = second_order_pipeline(u, master_seed=99, index=3)
        np.testing.assert_array_equal(g1, g2)
        assert m1 == m2
        np.testing.assert_array_equal(replay_second_order(u, m1), g1)

    def test_manifest_carries_stream_key(self, toy_problem):
        _, m = second_order_pipeline(toy_problem["u_gt"], master_seed=99, index=3)
        assert m["master_seed"] == 99
        assert m["index"] == 3
        assert m["boundary"] == "reflect"

    def test_index_separates_images(self, toy_problem):
        u = toy_problem["u_gt"]
        g1, _ = second_order_pipeline(u, master_seed=99, index=0)
        g2, _ = second_order_pipeline(u, master_seed=99, index=1)
        assert not np.array_equal(g1, g2)

    def test_output_range(self, toy_problem):
        g, _ = second_order_pipeline(toy_problem["u_gt"], master_seed=5, index=0)
        assert g.min() >= 0.0 and g.max() <= 1.0


class TestPiecewiseSmoothImage:
    def test_range_and_shape(self):
        img = piecewise_smooth_image(64, 48, seed=7)
        assert img.shape == (64, 48)
        assert img.min() >= 0.02 and img.max() <= 0.98

    def test_color(self):
        assert piecewise_smooth_image(32, 32, seed=7, channels=3).shape == (32, 32, 3)

    def test_seed_determinism(self):
        a = piecewise_smooth_image(32, 32, seed=1)
        b = piecewise_smooth_image(32, 32, seed=1)
        c = piecewise_smooth_image(32, 32, seed=2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_minimum_size(self):
        with pytest.raises(DimensionError):
            piecewise_smooth_image(4, 64, seed=0)
