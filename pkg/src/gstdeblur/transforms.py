"""Feature transforms used as shrinkage domains by the prox modules.

A transform maps an image (or kernel grid) to a FeaturePyramid, an ordered
list of feature stacks, and back. Shrinkage acts on the stacks; synthesis
returns to pixel space. Four kinds are supported:

 * identity        one stack, the grid itself
 * gradient-pair   periodic forward differences along each axis, with the
                   per-channel mean carried separately so synthesis can
                   restore what differencing annihilates
 * haar-wavelet    orthonormal multi-level 2x2 Haar pyramid; the coarsest
                   approximation band rides along unshrunk
 * learned         convolutional encoder/decoder pair (see extractor.py)

Classical kinds are linear with exact reconstruction. The learned kind
makes no round-trip promise; only its shape contract is fixed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .shrinkage import DEFAULT_GST, gst, soft

TRANSFORM_KINDS = ("identity", "gradient-pair", "haar-wavelet", "learned")


@dataclass
class TransformSpec:
    """Which transform to use and its knobs.

    levels is the Haar depth or the learned scale count. skip_mode decides
    how the prox modules combine the synthesized correction with their
    input: "direct" replaces, "residual" adds. Left unset it resolves to
    direct for classical kinds and residual for learned, where a trained
    decoder can compensate for the doubled identity path.
    """

    kind: str = "identity"
    levels: int = 3
    skip_mode: str | None = None
    channels: int = 1
    base_channels: int = 16
    reduction: int = 4
    rcab_per_scale: int = 2
    weights: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValidationError(f"unknown transform kind {self.kind!r}")
        if self.levels < 1:
            raise ValidationError(f"levels must be >= 1, got {self.levels}")
        if self.skip_mode not in (None, "direct", "residual"):
            raise ValidationError(f"unknown skip_mode {self.skip_mode!r}")
        if self.kind == "learned":
            if self.channels not in (1, 3):
                raise ValidationError("learned transform channels must be 1 or 3")
            if self.base_channels < 1 or self.reduction < 1:
                raise ValidationError("base_channels and reduction must be >= 1")
            if self.base_channels % self.reduction:
                raise ValidationError("reduction must divide base_channels")
            if self.rcab_per_scale < 1:
                raise ValidationError("rcab_per_scale must be >= 1")

    @property
    def effective_skip_mode(self):
        if self.skip_mode is not None:
            return self.skip_mode
        return "residual" if self.kind == "learned" else "direct"


@dataclass
class FeaturePyramid:
    """Ordered feature stacks, finest scale first.

    approx_index marks a stack that thresholding must leave alone (the Haar
    approximation band). mean carries per-channel means for transforms whose
    analysis discards them (gradient-pair).
    """

    stacks: list
    approx_index: int | None = None
    mean: np.ndarray | None = None

    @property
    def n_scales(self):
        return len(self.stacks) - (0 if self.approx_index is None else 1)


def scale_count(spec):
    """Number of shrinkable scales the transform emits."""
    if spec.kind == "identity":
        return 1
    if spec.kind == "gradient-pair":
        return 2
    return spec.levels


def _as_3d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[:, :, None], True
    if x.ndim == 3:
        return x, False
    raise DimensionError(f"expected 2-D or 3-D grid, got shape {x.shape}")


def analyze(x, spec):
    """Decompose a grid into the transform's FeaturePyramid."""
    x3, _ = _as_3d(x)
    if not np.all(np.isfinite(x3)):
        raise ValidationError("analysis input contains non-finite values")
    if spec.kind == "identity":
        return FeaturePyramid([x3.copy()])
    if spec.kind == "gradient-pair":
        dh = np.roll(x3, -1, axis=1) - x3
        dv = np.roll(x3, -1, axis=0) - x3
        return FeaturePyramid([dh, dv], mean=x3.mean(axis=(0, 1)))
    if spec.kind == "haar-wavelet":
        return _haar_analyze(x3, spec.levels)
    from . import extractor

    return FeaturePyramid(extractor.analyze_features(x3, spec))


def synthesize(pyr, spec):
    """Map a FeaturePyramid back to a grid (2-D when single channel)."""
    if spec.kind == "identity":
        if len(pyr.stacks) != 1:
            raise DimensionError("identity pyramid must hold exactly one stack")
        out = pyr.stacks[0]
    elif spec.kind == "gradient-pair":
        out = _gradient_pair_synthesize(pyr)
    elif spec.kind == "haar-wavelet":
        out = _haar_synthesize(pyr, spec.levels)
    else:
        from . import extractor

        out = extractor.synthesize_features(pyr.stacks, spec)
    if out.shape[2] == 1:
        return out[:, :, 0]
    return out


def threshold_pyramid(pyr, thetas, op="soft", p=1.0, config=DEFAULT_GST):
    """Apply a shrinkage rule scale by scale, skipping the exempt stack.

    thetas must provide one threshold per shrinkable scale, ordered like
    the stacks. op is "soft" or "gst"; p matters only for gst.
    """
    thetas = [float(t) for t in np.atleast_1d(thetas)]
    if len(thetas) != pyr.n_scales:
        raise ValidationError(
            f"expected {pyr.n_scales} thresholds, got {len(thetas)}"
        )
    if op not in ("soft", "gst"):
        raise ValidationError(f"unknown shrinkage op {op!r}")
    out = []
    at = 0
    for idx, stack in enumerate(pyr.stacks):
        if idx == pyr.approx_index:
            out.append(stack.copy())
            continue
        theta = thetas[at]
        at += 1
        if op == "soft":
            out.append(soft(stack, theta))
        else:
            out.append(gst(stack, theta, p, config))
    mean = None if pyr.mean is None else pyr.mean.copy()
    return FeaturePyramid(out, approx_index=pyr.approx_index, mean=mean)


def regularizer_value(pyr, p=1.0):
    """Sum of |coefficient|**p over the shrinkable stacks."""
    total = 0.0
    for idx, stack in enumerate(pyr.stacks):
        if idx == pyr.approx_index:
            continue
        a = np.abs(stack)
        total += float(a.sum() if p == 1.0 else (a ** p).sum())
    return total


# ---------------------------------------------------------------- haar


def _haar_analyze(x3, levels):
    h, w = x3.shape[:2]
    if h % (1 << levels) or w % (1 << levels):
        raise DimensionError(
            f"haar with {levels} levels needs dimensions divisible by "
            f"{1 << levels}, got {h}x{w}"
        )
    details = []
    cur = x3
    for _ in range(levels):
        cur, det = _haar_forward_level(cur)
        details.append(det)
    return FeaturePyramid(details + [cur], approx_index=levels)


def _haar_synthesize(pyr, levels):
    if pyr.approx_index != levels or len(pyr.stacks) != levels + 1:
        raise DimensionError("pyramid layout does not match a haar transform")
    cur = pyr.stacks[levels]
    for det in reversed(pyr.stacks[:levels]):
        cur = _haar_inverse_level(cur, det)
    return cur


def _haar_forward_level(x):
    # orthonormal 2x2 block transform; rows of the mixing matrix have unit
    # norm, so energy is preserved level by level
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, np.concatenate([lh, hl, hh], axis=2)


def _haar_inverse_level(ll, det):
    c3 = ll.shape[2]
    if det.shape[2] != 3 * c3 or det.shape[:2] != ll.shape[:2]:
        raise DimensionError("detail stack does not match approximation shape")
    lh = det[:, :, :c3]
    hl = det[:, :, c3:2 * c3]
    hh = det[:, :, 2 * c3:]
    a = (ll + lh + hl + hh) / 2.0
    b = (ll - lh + hl - hh) / 2.0
    c = (ll + lh - hl - hh) / 2.0
    d = (ll - lh - hl + hh) / 2.0
    h, w = ll.shape[:2]
    out = np.empty((2 * h, 2 * w, c3), dtype=np.float64)
    out[0::2, 0::2] = a
    out[0::2, 1::2] = b
    out[1::2, 0::2] = c
    out[1::2, 1::2] = d
    return out


# ------------------------------------------------------- gradient pair


def _gradient_pair_synthesize(pyr):
    """Minimum-norm least-squares inversion of the periodic differences.

    Forward differences kill constants, so the normal equations are solved
    per frequency with the zero frequency filled from the stored means. For
    coefficients that actually came from analyze the reconstruction is
    exact; for modified coefficients this is the least-squares image whose
    differences are closest to them.
    """
    if len(pyr.stacks) != 2 or pyr.mean is None:
        raise DimensionError("gradient-pair pyramid must hold two stacks and means")
    dh, dv = pyr.stacks
    if dh.shape != dv.shape:
        raise DimensionError("gradient stacks must share a shape")
    h, w, c = dh.shape
    ki = np.arange(h)
    kj = np.arange(w // 2 + 1)
    mh = np.exp(2j * np.pi * kj / w) - 1.0
    mv = np.exp(2j * np.pi * ki / h) - 1.0
    denom = (np.abs(mh) ** 2)[None, :] + (np.abs(mv) ** 2)[:, None]
    denom[0, 0] = 1.0
    out = np.empty((h, w, c), dtype=np.float64)
    for ch in range(c):
        num = np.conj(mh)[None, :] * np.fft.rfft2(dh[:, :, ch])
        num += np.conj(mv)[:, None] * np.fft.rfft2(dv[:, :, ch])
        spec = num / denom
        spec[0, 0] = pyr.mean[ch] * h * w
        out[:, :, ch] = np.fft.irfft2(spec, s=(h, w))
    return out
