"""Image and kernel quality metrics plus report aggregation.

PSNR and SSIM follow the standard definitions on the [0, peak] intensity
scale. SSIM uses an 11x11 Gaussian window (sigma 1.5), stability constants
K1 = 0.01 and K2 = 0.03, filter responses over the valid interior only,
and the Rec. 601 luminance of color inputs. Kernel similarity reports the
maximum normalized cross-correlation over all integer shifts (alignment
and scale invariant) alongside plain aligned MSE and RMSE.
"""

import numpy as np
from scipy.signal import correlate2d, fftconvolve

from .errors import DimensionError, ValidationError
from .grids import as_image, as_kernel

#: PSNR reported for an exact match, and the report ceiling in dB
PSNR_CAP = 100.0

_LUMA = np.array([0.299, 0.587, 0.114])


def _pair(a, b):
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB, pooled over all channels.

    Identical inputs report the +100 dB cap; the cap also bounds the
    result when the MSE underflows it.
    """
    if peak <= 0:
        raise ValidationError("peak must be positive")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(peak * peak / mse)), PSNR_CAP)


def _luminance(x):
    if x.ndim == 3 and x.shape[2] == 3:
        return x @ _LUMA
    if x.ndim == 3:
        return x[:, :, 0]
    return x


def ssim(a, b, peak=1.0):
    """Mean structural similarity over the valid filter interior.

    Color images are reduced to Rec. 601 luminance first. Images must be
    at least 11x11 to fit the window.
    """
    if peak <= 0:
        raise ValidationError("peak must be positive")
    a, b = _pair(a, b)
    x = _luminance(a)
    y = _luminance(b)
    if x.shape[0] < 11 or x.shape[1] < 11:
        raise DimensionError("ssim needs images of at least 11x11")
    ax = np.arange(11, dtype=np.float64) - 5
    g = np.exp(-(ax ** 2) / (2 * 1.5 ** 2))
    win = np.outer(g, g)
    win /= win.sum()

    def filt(z):
        return fftconvolve(z, win, mode="valid")

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mx = filt(x)
    my = filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def _pad_center(k, size):
    d = (size - k.shape[0]) // 2
    if d == 0:
        return k
    return np.pad(k, ((d, d), (d, d)))


def kernel_similarity(h_est, h_gt):
    """Compare two kernels: {"mnc", "mse", "rmse"}.

    mnc is the maximum over all 2-D integer shifts of the normalized
    cross-correlation, so it is invariant to translation and positive
    rescaling and equals 1 only for a shifted positive multiple. mse and
    rmse compare the center-aligned, common-size arrays directly. Sizes
    may differ; the smaller kernel is zero-padded symmetrically.
    """
    h_est = as_kernel(h_est)
    h_gt = as_kernel(h_gt)
    size = max(h_est.shape[0], h_gt.shape[0])
    a = _pad_center(h_est, size)
    b = _pad_center(h_gt, size)
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cannot compare an all-zero kernel")
    mnc = float(correlate2d(a, b, mode="full").max() / (na * nb))
    mse = float(np.mean((a - b) ** 2))
    return {"mnc": mnc, "mse": mse, "rmse": float(np.sqrt(mse))}


def boxplot_stats(values):
    """Five-number summary with the 1.5 IQR outlier rule.

    Quartiles use linear interpolation. Whiskers stop at the most extreme
    samples still inside [q1 - 1.5 iqr, q3 + 1.5 iqr]; everything outside
    is listed (sorted) under "outliers".
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 4:
        raise ValidationError("boxplot_stats needs at least 4 values")
    if not np.all(np.isfinite(v)):
        raise ValidationError("boxplot_stats values must be finite")
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo = q1 - 1.5 * iqr
    hi = q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    outliers = np.sort(v[(v < lo) | (v > hi)])
    return {
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "iqr": float(iqr),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(o) for o in outliers],
    }


def aggregate_report(rows):
    """Aggregate per-image metric rows into a summary dict.

    rows: list of dicts with numeric metric fields (psnr, ssim, optionally
    mnc, mse, rmse). Fields absent from every row are skipped. Perceptual
    metrics that need external models are reserved as explicit nulls.
    """
    if not rows:
        raise ValidationError("cannot aggregate an empty report")
    summary = {"count": len(rows)}
    for key in ("psnr", "ssim", "mnc", "mse", "rmse"):
        vals = [r[key] for r in rows if key in r and r[key] is not None]
        if not vals:
            continue
        summary[key] = {
            "mean": float(np.mean(vals)),
            # quartiles need 4 samples; small batches get the mean only
            "box": boxplot_stats(vals) if len(vals) >= 4 else None,
        }
    # reserved: computable only with external perceptual models
    summary["fsim"] = None
    summary["vif"] = None
    summary["ifc"] = None
    return summary
