"""Synthetic degradation: blur kernel families, noise, and paired data.

Randomness discipline: everything derives from a counter-based Philox
generator keyed by (master_seed, image_index), so each image owns an
independent substream and batches reproduce bit-identically regardless
of processing order. Sampled plans record every branch, parameter, and
per-step noise seed; replaying a plan bypasses sampling entirely and
reproduces the degraded image bit for bit.

Kernel families share one elliptical radius: coordinates are rotated by
the kernel angle and scaled by (sigma_x, sigma_y), giving the squared
Mahalanobis radius rho2. Profiles:

    gaussian              exp(-rho2 / 2)
    generalized gaussian  exp(-rho2**(beta/2) / 2)
    plateau               1 / (1 + rho2**(beta/2))
    sinc                  jinc low-pass at a cutoff frequency (ringing;
                          the only family with negative side lobes)

All kernels are normalized to unit sum. The sinc family therefore has
unit mass but not nonnegativity, which is what makes it ring.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j1

from .errors import CodecUnavailableError, DimensionError, ValidationError
from .grids import as_image, convolve

KERNEL_FAMILIES = (
    "iso-gaussian",
    "aniso-gaussian",
    "generalized-gaussian",
    "plateau",
    "sinc",
)

#: kernel sizes sampled by the two-pass pipeline
PIPELINE_SIZES = tuple(range(7, 22, 2))

MANIFEST_SCHEMA = 1


def substream(master_seed, index):
    """Independent per-image generator: Philox keyed by (seed, index)."""
    return np.random.Generator(np.random.Philox(key=(int(master_seed), int(index))))


@dataclass
class KernelSpec:
    """Parameters of one sampled blur kernel."""

    family: str
    size: int
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    angle: float = 0.0
    beta: float = 2.0
    cutoff: float = math.pi

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}")
        if self.size < 1 or self.size % 2 != 1:
            raise DimensionError(f"kernel size must be odd, got {self.size}")
        if self.family != "sinc" and (self.sigma_x <= 0 or self.sigma_y <= 0):
            raise ValidationError("sigma_x and sigma_y must be positive")
        # radial families take a single width; only aniso-gaussian keeps
        # an independent sigma_y and a meaningful angle
        if self.family in ("iso-gaussian", "generalized-gaussian", "plateau"):
            self.sigma_y = self.sigma_x
        if self.family in ("generalized-gaussian", "plateau") and self.beta <= 0:
            raise ValidationError("beta must be positive")
        if self.family == "sinc" and not (0.0 < self.cutoff <= math.pi):
            raise ValidationError("cutoff must lie in (0, pi]")


def make_kernel(spec):
    """Materialize a KernelSpec as a unit-sum kernel array."""
    s = spec.size
    c = s // 2
    ax = np.arange(s, dtype=np.float64) - c
    xx = ax[None, :]
    yy = ax[:, None]
    if spec.family == "sinc":
        r = np.hypot(xx, yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = spec.cutoff * j1(spec.cutoff * r) / (2.0 * math.pi * r)
        k[c, c] = spec.cutoff ** 2 / (4.0 * math.pi)
    else:
        ca, sa = math.cos(spec.angle), math.sin(spec.angle)
        xr = (ca * xx + sa * yy) / spec.sigma_x
        yr = (-sa * xx + ca * yy) / spec.sigma_y
        rho2 = xr * xr + yr * yr
        if spec.family in ("iso-gaussian", "aniso-gaussian"):
            k = np.exp(-rho2 / 2.0)
        elif spec.family == "generalized-gaussian":
            k = np.exp(-0.5 * rho2 ** (spec.beta / 2.0))
        else:
            k = 1.0 / (1.0 + rho2 ** (spec.beta / 2.0))
    total = k.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValidationError("kernel profile did not produce a positive mass")
    return k / total


@dataclass
class NoiseSpec:
    """One noise application. Levels follow the 0..255 convention:

    gaussian adds (level / 255) * N(0, 1); poisson scales intensities by
    s = 255 / level, draws counts, and divides back. gray=True draws a
    single field shared by all channels of a color image.
    """

    kind: str
    level: float
    gray: bool = False

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if self.level <= 0:
            raise ValidationError("noise level must be positive")


def add_noise(x, spec, rng):
    """Apply a NoiseSpec with the given generator; output clipped to [0, 1]."""
    x = as_image(x)
    color = x.ndim == 3 and x.shape[2] > 1
    if spec.kind == "gaussian":
        if spec.gray and color:
            field = rng.standard_normal(x.shape[:2])[:, :, None]
        else:
            field = rng.standard_normal(x.shape)
        out = x + (spec.level / 255.0) * field
    else:
        scale = 255.0 / spec.level
        base = np.maximum(x, 0.0)
        if spec.gray and color:
            luma = base.mean(axis=2)
            noisy = rng.poisson(luma * scale) / scale
            out = x + (noisy - luma)[:, :, None]
        else:
            out = x + (rng.poisson(base * scale) / scale - base)
    return np.clip(out, 0.0, 1.0)


# ------------------------------------------------------ first-order pairs


def make_pair_firstorder(
    u_gt,
    rng,
    sigma_range=(0.2, 4.0),
    noise_std=0.0,
    kernel_size=15,
    boundary="periodic",
):
    """Isotropic Gaussian blur with sigma drawn from sigma_range.

    noise_std is the standard deviation of additive Gaussian noise on the
    [0, 1] intensity scale (0 disables it, and the noiseless branch then
    returns exactly convolve(u_gt, k)). Returns (g, kernel, manifest).
    """
    u_gt = as_image(u_gt, entry_point=True)
    lo, hi = float(sigma_range[0]), float(sigma_range[1])
    if not (0 < lo <= hi):
        raise ValidationError(f"bad sigma range ({lo}, {hi})")
    if noise_std < 0:
        raise ValidationError("noise_std must be >= 0")
    sigma = float(rng.uniform(lo, hi))
    spec = KernelSpec("iso-gaussian", kernel_size, sigma_x=sigma)
    k = make_kernel(spec)
    g = convolve(u_gt, k, boundary)
    noise_seed = None
    if noise_std > 0:
        noise_seed = int(rng.integers(0, 2 ** 63 - 1))
        nrng = np.random.Generator(np.random.Philox(key=(noise_seed, 0)))
        g = np.clip(g + noise_std * nrng.standard_normal(g.shape), 0.0, 1.0)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "mode": "first-order",
        "kernel": {"family": "iso-gaussian", "size": kernel_size, "sigma": sigma},
        "noise_std": noise_std,
        "noise_seed": noise_seed,
        "boundary": boundary,
    }
    return g, k, manifest


def replay_firstorder(u_gt, manifest):
    """Rebuild a first-order pair from its manifest, bit for bit."""
    spec = KernelSpec(
        "iso-gaussian",
        manifest["kernel"]["size"],
        sigma_x=manifest["kernel"]["sigma"],
    )
    k = make_kernel(spec)
    g = convolve(as_image(u_gt, entry_point=True), k, manifest["boundary"])
    if manifest["noise_std"] > 0:
        nrng = np.random.Generator(np.random.Philox(key=(manifest["noise_seed"], 0)))
        g = np.clip(
            g + manifest["noise_std"] * nrng.standard_normal(g.shape), 0.0, 1.0
        )
    return g, k


# ------------------------------------------------------ second-order plan

# pass-level constants of the two-pass protocol
SINC_FIRST_PROB = 0.1
FAMILY_PROBS = (0.7, 0.15, 0.15)  # gaussian / generalized-gaussian / plateau
ANISO_PROB = 0.5  # within the gaussian family
SIGMA_RANGE_1 = (0.2, 3.0)
SIGMA_RANGE_2 = (0.2, 1.5)
BETA_GG_RANGE = (0.5, 4.0)
BETA_PLATEAU_RANGE = (1.0, 2.0)
GAUSS_NOISE_1 = (1.0, 30.0)
GAUSS_NOISE_2 = (1.0, 25.0)
POISSON_NOISE_1 = (0.05, 3.0)
POISSON_NOISE_2 = (0.05, 2.5)
GRAY_NOISE_PROB = 0.4
SECOND_BLUR_SKIP_PROB = 0.2
FINAL_SINC_PROB = 0.8
JPEG_QUALITY_RANGE = (30, 95)
SINC_CUTOFF_RANGE = (math.pi / 3.0, math.pi)


def _sample_blur(rng, sigma_range):
    size = int(rng.choice(PIPELINE_SIZES))
    u = rng.uniform()
    if u < FAMILY_PROBS[0]:
        if rng.uniform() < ANISO_PROB:
            return {
                "family": "aniso-gaussian",
                "size": size,
                "sigma_x": float(rng.uniform(*sigma_range)),
                "sigma_y": float(rng.uniform(*sigma_range)),
                "angle": float(rng.uniform(0.0, math.pi)),
            }
        return {
            "family": "iso-gaussian",
            "size": size,
            "sigma_x": float(rng.uniform(*sigma_range)),
        }
    if u < FAMILY_PROBS[0] + FAMILY_PROBS[1]:
        return {
            "family": "generalized-gaussian",
            "size": size,
            "sigma_x": float(rng.uniform(*sigma_range)),
            "beta": float(rng.uniform(*BETA_GG_RANGE)),
        }
    return {
        "family": "plateau",
        "size": size,
        "sigma_x": float(rng.uniform(*sigma_range)),
        "beta": float(rng.uniform(*BETA_PLATEAU_RANGE)),
    }


def _sample_sinc(rng):
    return {
        "family": "sinc",
        "size": int(rng.choice(PIPELINE_SIZES)),
        "cutoff": float(rng.uniform(*SINC_CUTOFF_RANGE)),
    }


def _sample_noise(rng, gauss_range, poisson_range):
    if rng.uniform() < 0.5:
        kind, level = "gaussian", float(rng.uniform(*gauss_range))
    else:
        kind, level = "poisson", float(rng.uniform(*poisson_range))
    return {
        "kind": kind,
        "level": level,
        "gray": bool(rng.uniform() < GRAY_NOISE_PROB),
        "seed": int(rng.integers(0, 2 ** 63 - 1)),
    }


def sample_second_order_plan(rng, jpeg=False):
    """Draw every branch and parameter of the two-pass degradation.

    The draw order is fixed; the returned plan is self-contained (it holds
    the per-step noise seeds), so executing it never touches the sampling
    generator again.
    """
    plan = {"schema": MANIFEST_SCHEMA, "mode": "second-order", "steps": []}
    if rng.uniform() < SINC_FIRST_PROB:
        plan["steps"].append({"step": "blur", "pass": 1, "kernel": _sample_sinc(rng)})
    else:
        plan["steps"].append(
            {"step": "blur", "pass": 1, "kernel": _sample_blur(rng, SIGMA_RANGE_1)}
        )
    plan["steps"].append(
        {"step": "noise", "pass": 1, **_sample_noise(rng, GAUSS_NOISE_1, POISSON_NOISE_1)}
    )
    if rng.uniform() >= SECOND_BLUR_SKIP_PROB:
        plan["steps"].append(
            {"step": "blur", "pass": 2, "kernel": _sample_blur(rng, SIGMA_RANGE_2)}
        )
    plan["steps"].append(
        {"step": "noise", "pass": 2, **_sample_noise(rng, GAUSS_NOISE_2, POISSON_NOISE_2)}
    )
    if jpeg:
        plan["steps"].append(
            {"step": "jpeg", "quality": int(rng.integers(JPEG_QUALITY_RANGE[0], JPEG_QUALITY_RANGE[1] + 1))}
        )
    if rng.uniform() < FINAL_SINC_PROB:
        plan["steps"].append({"step": "blur", "pass": "final", "kernel": _sample_sinc(rng)})
    return plan


def apply_plan(u_gt, plan, boundary="reflect", jpeg_codec=None):
    """Execute a sampled or replayed plan. Clips to [0, 1] after every step.

    jpeg_codec, when a plan contains a jpeg step, must be a callable
    (image_in_unit_range, quality) -> image_in_unit_range. Without one the
    step raises CodecUnavailableError: this package ships no codec.
    """
    out = as_image(u_gt, entry_point=True)
    for step in plan["steps"]:
        if step["step"] == "blur":
            k = make_kernel(KernelSpec(**step["kernel"]))
            out = np.clip(convolve(out, k, boundary), 0.0, 1.0)
        elif step["step"] == "noise":
            spec = NoiseSpec(step["kind"], step["level"], step["gray"])
            rng = np.random.Generator(np.random.Philox(key=(step["seed"], 0)))
            out = add_noise(out, spec, rng)
        elif step["step"] == "jpeg":
            if jpeg_codec is None:
                raise CodecUnavailableError(
                    "plan contains a jpeg step but no codec is configured"
                )
            out = np.clip(jpeg_codec(out, step["quality"]), 0.0, 1.0)
        else:
            raise ValidationError(f"unknown plan step {step['step']!r}")
    return out


def second_order_pipeline(u_gt, master_seed, index=0, boundary="reflect", jpeg_codec=None):
    """Sample a plan from the image's substream and execute it.

    Returns (degraded, manifest). The manifest is the executed plan plus
    the substream key, sufficient for bit-identical replay.
    """
    rng = substream(master_seed, index)
    plan = sample_second_order_plan(rng, jpeg=jpeg_codec is not None)
    g = apply_plan(u_gt, plan, boundary=boundary, jpeg_codec=jpeg_codec)
    manifest = dict(plan)
    manifest["master_seed"] = int(master_seed)
    manifest["index"] = int(index)
    manifest["boundary"] = boundary
    return g, manifest


def replay_second_order(u_gt, manifest, jpeg_codec=None):
    """Re-execute a recorded second-order manifest bit for bit."""
    return apply_plan(
        u_gt, manifest, boundary=manifest.get("boundary", "reflect"), jpeg_codec=jpeg_codec
    )


# ------------------------------------------------------ synthetic scenes


def piecewise_smooth_image(height, width, seed, channels=1, patches=14):
    """Cartoon-like test scene: smooth background plus sharp-edged shapes.

    Rich in edges at many orientations, which makes blur kernels well
    identifiable, while staying piecewise smooth. Values lie in [0, 1].
    """
    if height < 8 or width < 8:
        raise DimensionError("scene must be at least 8x8")
    rng = substream(seed, 0)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= height
    xx /= width
    img = np.zeros((height, width, channels), dtype=np.float64)
    for ch in range(channels):
        a, b = rng.uniform(-0.2, 0.2, size=2)
        img[:, :, ch] = 0.45 + a * (xx - 0.5) + b * (yy - 0.5)
        img[:, :, ch] += 0.1 * np.sin(2 * np.pi * (xx * rng.uniform(0.5, 1.5) + rng.uniform()))
    for _ in range(patches):
        kind = rng.uniform()
        value = rng.uniform(0.08, 0.92, size=channels)
        if kind < 0.5:
            y0, x0 = rng.uniform(0, 0.8, size=2)
            hgt, wid = rng.uniform(0.1, 0.45, size=2)
            mask = (yy >= y0) & (yy < y0 + hgt) & (xx >= x0) & (xx < x0 + wid)
        else:
            cy, cx = rng.uniform(0.1, 0.9, size=2)
            rad = rng.uniform(0.05, 0.25)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < rad ** 2
        ramp = rng.uniform(-0.15, 0.15)
        for ch in range(channels):
            img[mask, ch] = value[ch] + ramp * (xx[mask] - xx[mask].mean())
    img = np.clip(img, 0.02, 0.98)
    if channels == 1:
        return img[:, :, 0]
    return img
