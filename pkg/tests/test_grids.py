"""Image/kernel validation, convolution substrate, adjoints, resampling."""

import numpy as np
import pytest

from gstdeblur.errors import DegenerateKernelError, DimensionError, ValidationError
from gstdeblur.grids import (
    as_image,
    as_kernel,
    convolve,
    convolve_direct,
    correlate_into_kernel,
    embed_kernel,
    extract_kernel,
    flip,
    gaussian_kernel,
    normalize_kernel,
    operator_norm,
    resample,
)


class TestValidation:
    def test_as_image_shapes(self):
        as_image(np.zeros((4, 5)))
        as_image(np.zeros((4, 5, 1)))
        as_image(np.zeros((4, 5, 3)))
        with pytest.raises(DimensionError):
            as_image(np.zeros(4))
        with pytest.raises(DimensionError):
            as_image(np.zeros((4, 5, 2)))
        with pytest.raises(DimensionError):
            as_image(np.zeros((2, 3, 4, 5)))

    def test_as_image_rejects_nonfinite(self):
        bad = np.zeros((4, 4))
        bad[1, 1] = np.nan
        with pytest.raises(ValidationError):
            as_image(bad)

    def test_entry_point_minimum_side(self):
        as_image(np.zeros((8, 8)), entry_point=True)
        with pytest.raises(DimensionError):
            as_image(np.zeros((7, 9)), entry_point=True)

    def test_as_kernel(self):
        as_kernel(np.ones((3, 3)))
        with pytest.raises(DimensionError):
            as_kernel(np.ones((3, 5)))
        with pytest.raises(DimensionError):
            as_kernel(np.ones((4, 4)))
        with pytest.raises(ValidationError):
            as_kernel(np.full((3, 3), np.inf))

    def test_normalize_kernel(self):
        k = np.array([[1.0, -2.0], [3.0, 0.0]])
        # make it square odd
        k = np.array([[1.0, -2.0, 0.0], [3.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        n = normalize_kernel(k)
        assert n.min() >= 0.0
        assert n.sum() == pytest.approx(1.0, abs=1e-15)
        assert n[0, 1] == 0.0

    def test_normalize_kernel_degenerate(self):
        with pytest.raises(DegenerateKernelError):
            normalize_kernel(-np.ones((3, 3)))


class TestGaussianKernel:
    def test_unit_mass_and_symmetry(self):
        k = gaussian_kernel(9, 1.5)
        assert k.shape == (9, 9)
        assert k.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_array_equal(k, flip(k))
        assert k[4, 4] == k.max()

    def test_validation(self):
        with pytest.raises(ValidationError):
            gaussian_kernel(9, 0.0)
        with pytest.raises(DimensionError):
            gaussian_kernel(8, 1.0)


class TestEmbedExtract:
    def test_round_trip_exact(self, rng):
        k = rng.standard_normal((5, 5))
        grid = embed_kernel(k, (16, 12))
        np.testing.assert_array_equal(extract_kernel(grid, 5), k)
        assert grid.sum() == pytest.approx(k.sum(), abs=1e-12)

    def test_center_lands_at_origin(self):
        k = np.zeros((3, 3))
        k[1, 1] = 1.0
        grid = embed_kernel(k, (8, 8))
        assert grid[0, 0] == 1.0
        assert grid.sum() == 1.0

    def test_adjoint_of_zero_extension(self, rng):
        # <embed(k), G> == <k, extract(G, size)>
        for _ in range(20):
            k = rng.standard_normal((5, 5))
            grid = rng.standard_normal((11, 13))
            lhs = float((embed_kernel(k, grid.shape) * grid).sum())
            rhs = float((k * extract_kernel(grid, 5)).sum())
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_too_large(self):
        with pytest.raises(DimensionError):
            embed_kernel(np.ones((9, 9)), (8, 8))
        with pytest.raises(DimensionError):
            extract_kernel(np.zeros((8, 8)), 9)


class TestConvolve:
    def test_delta_is_identity(self, rng):
        x = rng.uniform(size=(12, 10))
        d = np.zeros((5, 5))
        d[2, 2] = 1.0
        for boundary in ("periodic", "reflect"):
            np.testing.assert_allclose(convolve(x, d, boundary), x, atol=1e-13)

    def test_matches_direct_reference(self, rng):
        for boundary in ("periodic", "reflect"):
            for shape in ((16, 16), (12, 18, 3)):
                x = rng.uniform(size=shape)
                k = rng.standard_normal((5, 5))
                np.testing.assert_allclose(
                    convolve(x, k, boundary),
                    convolve_direct(x, k, boundary),
                    atol=1e-12,
                )

    def test_periodic_shift_equivariance(self, rng):
        x = rng.uniform(size=(16, 16))
        k = rng.uniform(size=(5, 5))
        shifted = np.roll(x, (3, -2), axis=(0, 1))
        np.testing.assert_allclose(
            convolve(shifted, k),
            np.roll(convolve(x, k), (3, -2), axis=(0, 1)),
            atol=1e-12,
        )

    def test_linearity(self, rng):
        x = rng.uniform(size=(10, 10))
        y = rng.uniform(size=(10, 10))
        k = rng.standard_normal((3, 3))
        np.testing.assert_allclose(
            convolve(2.0 * x - 3.0 * y, k),
            2.0 * convolve(x, k) - 3.0 * convolve(y, k),
            atol=1e-12,
        )

    def test_unit_mass_preserves_constants(self):
        x = np.full((10, 10), 0.37)
        k = gaussian_kernel(5, 1.2)
        for boundary in ("periodic", "reflect"):
            np.testing.assert_allclose(convolve(x, k, boundary), x, atol=1e-13)

    def test_kernel_larger_than_image(self):
        with pytest.raises(DimensionError):
            convolve(np.zeros((8, 8)), np.ones((9, 9)) / 81.0)

    def test_bad_boundary(self):
        with pytest.raises(ValidationError):
            convolve(np.zeros((8, 8)), np.ones((3, 3)) / 9.0, "mirror")


class TestAdjoints:
    def test_flip_is_spatial_adjoint(self, rng):
        # <convolve(u, k), v> == <u, convolve(v, flip(k))> under periodic
        for _ in range(20):
            u = rng.standard_normal((12, 14))
            v = rng.standard_normal((12, 14))
            k = rng.standard_normal((5, 5))
            lhs = float((convolve(u, k) * v).sum())
            rhs = float((u * convolve(v, flip(k))).sum())
            assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs), 1.0)

    def test_correlate_into_kernel_adjoint(self, rng):
        # <convolve(u, h), v> == <h, correlate_into_kernel(u, v, size)>
        for shape in ((12, 14), (10, 10, 3)):
            for _ in range(10):
                u = rng.standard_normal(shape)
                v = rng.standard_normal(shape)
                h = rng.standard_normal((7, 7))
                lhs = float((convolve(u, h) * v).sum())
                rhs = float((h * correlate_into_kernel(u, v, 7)).sum())
                assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs), 1.0)

    def test_correlate_shape_mismatch(self):
        with pytest.raises(DimensionError):
            correlate_into_kernel(np.zeros((8, 8)), np.zeros((8, 9)), 3)


class TestOperatorNorm:
    def test_unit_mass_nonnegative_kernel(self):
        assert operator_norm(gaussian_kernel(7, 1.5), (32, 32)) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_bound_is_respected(self, rng):
        k = rng.standard_normal((5, 5))
        bound = operator_norm(k, (16, 16))
        for _ in range(10):
            x = rng.standard_normal((16, 16))
            assert np.linalg.norm(convolve(x, k)) <= bound * np.linalg.norm(x) + 1e-9

    def test_scaling(self, rng):
        k = rng.standard_normal((3, 3))
        assert operator_norm(2.5 * k, (8, 8)) == pytest.approx(
            2.5 * operator_norm(k, (8, 8)), rel=1e-12
        )


class TestResample:
    def test_down2_preserves_mean(self, rng):
        x = rng.uniform(size=(16, 20))
        y = resample(x, "down2")
        assert y.shape == (8, 10)
        assert y.mean() == pytest.approx(x.mean(), abs=1e-14)

    def test_down2_block_average(self):
        x = np.array([[1.0, 3.0], [5.0, 7.0]])
        assert resample(x, "down2")[0, 0] == 4.0

    def test_down2_odd_rejected(self):
        with pytest.raises(DimensionError):
            resample(np.zeros((9, 8)), "down2")

    def test_up2_shape_and_constants(self):
        x = np.full((5, 7, 3), 0.42)
        y = resample(x, "up2")
        assert y.shape == (10, 14, 3)
        np.testing.assert_allclose(y, 0.42, atol=1e-14)

    def test_up2_then_down2_on_smooth_ramp(self):
        # bilinear at half-pixel centers followed by 2x2 mean recovers a
        # linear ramp away from the clamped edges
        x = np.tile(np.arange(8.0), (8, 1))
        y = resample(resample(x, "up2"), "down2")
        np.testing.assert_allclose(y[:, 1:-1], x[:, 1:-1], atol=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            resample(np.zeros((4, 4)), "up3")
