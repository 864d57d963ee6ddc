"""Images, blur kernels, and the 2-D convolution substrate.

Conventions used throughout the package:

 * an image is a float64 array of shape (H, W) or (H, W, C) with C in {1, 3},
   nominal value range [0, 1] (values outside are tolerated everywhere except
   at file boundaries, which clip);
 * a kernel is a small odd-sized square float64 array, centered at
   (size//2, size//2);
 * convolve(x, k) is true mathematical convolution with "same" output size.

Under the periodic boundary the convolution is diagonalized by the DFT, so
the forward map, its adjoint, and its operator norm are all exact and cheap.
The reflect boundary mirrors the image (edge sample repeated) before a valid
convolution and is offered for synthesis realism; it is not self-adjoint.
"""

import numpy as np

from .errors import DegenerateKernelError, DimensionError, ValidationError

BOUNDARY_MODES = ("periodic", "reflect")

#: entry-point minimum side length for pipeline images
MIN_ENTRY_SIDE = 8


def as_image(x, entry_point=False):
    """Validate and return x as a float64 image array.

    entry_point=True additionally enforces the pipeline minimum size of
    8 x 8 required by the multi-scale machinery.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise DimensionError(f"image must be 2-D or 3-D, got shape {x.shape}")
    if x.ndim == 3 and x.shape[2] not in (1, 3):
        raise DimensionError(f"image channel count must be 1 or 3, got {x.shape[2]}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("image contains non-finite values")
    if entry_point and (x.shape[0] < MIN_ENTRY_SIDE or x.shape[1] < MIN_ENTRY_SIDE):
        raise DimensionError(
            f"pipeline images must be at least {MIN_ENTRY_SIDE}x{MIN_ENTRY_SIDE}, "
            f"got {x.shape[0]}x{x.shape[1]}"
        )
    return x


def as_kernel(k):
    """Validate and return k as a float64 kernel array (square, odd, finite)."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimensionError(f"kernel must be square, got shape {k.shape}")
    if k.shape[0] % 2 != 1:
        raise DimensionError(f"kernel size must be odd, got {k.shape[0]}")
    if not np.all(np.isfinite(k)):
        raise ValidationError("kernel contains non-finite values")
    return k


def normalize_kernel(k):
    """Clamp negative entries to zero and rescale to unit mass.

    Raises DegenerateKernelError when nothing positive remains, since a
    zero kernel cannot represent a blur.
    """
    k = as_kernel(k)
    clamped = np.maximum(k, 0.0)
    mass = clamped.sum()
    if mass <= 0.0:
        raise DegenerateKernelError("kernel has no positive entries after clamping")
    return clamped / mass


def flip(k):
    """Reverse both axes: flip(k)[i, j] = k[s-1-i, s-1-j].

    For an odd centered kernel this is the spatial adjoint of convolution:
    <convolve(u, k), v> == <u, convolve(v, flip(k))> under the periodic
    boundary.
    """
    k = np.asarray(k, dtype=np.float64)
    return k[::-1, ::-1].copy()


def gaussian_kernel(size, sigma):
    """Isotropic Gaussian kernel of odd size, normalized to unit mass."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if size % 2 != 1 or size < 1:
        raise DimensionError(f"kernel size must be odd and positive, got {size}")
    c = size // 2
    ax = np.arange(size, dtype=np.float64) - c
    r2 = ax[:, None] ** 2 + ax[None, :] ** 2
    k = np.exp(-r2 / (2.0 * sigma * sigma))
    return k / k.sum()


def embed_kernel(k, shape):
    """Zero-pad a kernel onto a grid with its center wrapped to the origin.

    The layout makes FFT multiplication implement centered convolution:
    entry k[i, j] lands at ((i - c) mod H, (j - c) mod W) with c = size//2.
    """
    k = as_kernel(k)
    h, w = int(shape[0]), int(shape[1])
    s = k.shape[0]
    if s > min(h, w):
        raise DimensionError(f"kernel size {s} exceeds grid {h}x{w}")
    c = s // 2
    grid = np.zeros((h, w), dtype=np.float64)
    rows = (np.arange(s) - c) % h
    cols = (np.arange(s) - c) % w
    grid[np.ix_(rows, cols)] = k
    return grid


def extract_kernel(grid, size):
    """Gather the centered kernel support back out of a grid.

    Exact transpose of embed_kernel's zero extension, used to restrict
    kernel-space gradients to the kernel support.
    """
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    s = int(size)
    if s % 2 != 1 or s > min(h, w):
        raise DimensionError(f"cannot extract {s}x{s} kernel from {h}x{w} grid")
    c = s // 2
    rows = (np.arange(s) - c) % h
    cols = (np.arange(s) - c) % w
    return grid[np.ix_(rows, cols)].copy()


def _circular(x, k):
    # periodic same-size convolution through the DFT
    h, w = x.shape[:2]
    kf = np.fft.rfft2(embed_kernel(k, (h, w)))
    xf = np.fft.rfft2(x, axes=(0, 1))
    if x.ndim == 3:
        kf = kf[:, :, None]
    return np.fft.irfft2(xf * kf, s=(h, w), axes=(0, 1))


def _pad_reflect(x, c):
    pad = [(c, c), (c, c)] + [(0, 0)] * (x.ndim - 2)
    return np.pad(x, pad, mode="symmetric")


def convolve(x, k, boundary="periodic"):
    """Same-size 2-D convolution of an image by a centered kernel.

    Multichannel images are convolved channel by channel. boundary is
    "periodic" (circular, DFT-diagonal) or "reflect" (mirror padding with
    the edge sample repeated, then a valid convolution).
    """
    x = as_image(x)
    k = as_kernel(k)
    if boundary not in BOUNDARY_MODES:
        raise ValidationError(f"unknown boundary mode {boundary!r}")
    if k.shape[0] > min(x.shape[0], x.shape[1]):
        raise DimensionError(
            f"kernel size {k.shape[0]} exceeds image {x.shape[0]}x{x.shape[1]}"
        )
    if boundary == "reflect":
        c = k.shape[0] // 2
        padded = _pad_reflect(x, c)
        out = _circular(padded, k)
        return out[c:c + x.shape[0], c:c + x.shape[1]]
    return _circular(x, k)


def convolve_direct(x, k, boundary="periodic"):
    """Reference spatial-domain implementation of convolve.

    Accumulates shifted copies tap by tap. Kept deliberately independent
    of the FFT path so the two can cross-check each other.
    """
    x = as_image(x)
    k = as_kernel(k)
    if boundary not in BOUNDARY_MODES:
        raise ValidationError(f"unknown boundary mode {boundary!r}")
    if k.shape[0] > min(x.shape[0], x.shape[1]):
        raise DimensionError(
            f"kernel size {k.shape[0]} exceeds image {x.shape[0]}x{x.shape[1]}"
        )
    s = k.shape[0]
    c = s // 2
    if boundary == "reflect":
        padded = _pad_reflect(x, c)
        out = convolve_direct(padded, k, "periodic")
        return out[c:c + x.shape[0], c:c + x.shape[1]]
    out = np.zeros_like(x)
    for i in range(s):
        for j in range(s):
            if k[i, j] == 0.0:
                continue
            out += k[i, j] * np.roll(x, (i - c, j - c), axis=(0, 1))
    return out


def correlate_into_kernel(u, v, size):
    """Correlation of v against u, restricted to a centered kernel support.

    This is the exact adjoint of h -> convolve(u, h) seen as a linear map
    from size x size kernels to images under the periodic boundary:

        <convolve(u, h), v> == <h, correlate_into_kernel(u, v, size)>

    Multichannel inputs are reduced by summing the per-channel correlations.
    """
    u = as_image(u)
    v = as_image(v)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    h, w = u.shape[:2]
    uf = np.fft.rfft2(u, axes=(0, 1))
    vf = np.fft.rfft2(v, axes=(0, 1))
    prod = np.conj(uf) * vf
    if u.ndim == 3:
        prod = prod.sum(axis=2)
    grid = np.fft.irfft2(prod, s=(h, w))
    return extract_kernel(grid, size)


def operator_norm(k, shape):
    """Spectral norm of x -> convolve(x, k) on a periodic H x W grid.

    Circular convolution is diagonalized by the DFT, so the norm is the
    largest DFT magnitude of the embedded kernel. The bound is tight.
    """
    return float(np.abs(np.fft.fft2(embed_kernel(k, shape))).max())


def resample(x, mode):
    """Dyadic resampling: "down2" is 2x2 mean pooling, "up2" is bilinear.

    down2 requires even spatial dimensions and preserves the global mean
    exactly. up2 doubles both sides, sampling at half-pixel centers with
    edge clamping, so constants stay constant. Unlike the image validators
    this accepts any channel count, since feature stacks pass through here.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise DimensionError(f"expected 2-D or 3-D grid, got shape {x.shape}")
    if mode == "down2":
        h, w = x.shape[:2]
        if h % 2 or w % 2:
            raise DimensionError(f"down2 needs even dimensions, got {h}x{w}")
        shape = (h // 2, 2, w // 2, 2) + x.shape[2:]
        return x.reshape(shape).mean(axis=(1, 3))
    if mode == "up2":
        out = _upsample2_axis(x, 0)
        return _upsample2_axis(out, 1)
    raise ValidationError(f"unknown resample mode {mode!r}")


def _upsample2_axis(x, axis):
    n = x.shape[axis]
    pos = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n - 1)
    hi = np.clip(lo + 1, 0, n - 1)
    w = np.clip(pos - lo, 0.0, 1.0)
    shape = [1] * x.ndim
    shape[axis] = 2 * n
    w = w.reshape(shape)
    return (1.0 - w) * np.take(x, lo, axis=axis) + w * np.take(x, hi, axis=axis)
