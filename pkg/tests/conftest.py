"""Shared fixtures: a deterministic toy deblurring problem and tmp helpers."""

import numpy as np
import pytest

from gstdeblur.degrade import piecewise_smooth_image
from gstdeblur.grids import convolve, gaussian_kernel


TOY_SEED = 7
TOY_KERNEL_SIZE = 9
TOY_SIGMA = 1.5


@pytest.fixture(scope="session")
def toy_problem():
    """64x64 noiseless blind-deblur instance used across end-to-end tests."""
    u_gt = piecewise_smooth_image(64, 64, seed=TOY_SEED)
    h_gt = gaussian_kernel(TOY_KERNEL_SIZE, TOY_SIGMA)
    g = convolve(u_gt, h_gt)
    return {"u_gt": u_gt, "h_gt": h_gt, "g": g}


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
