"""Alternating unfolded estimation of image and blur kernel.

One observation model is assumed throughout: g = convolve(u, h) + noise,
with u the latent image and h a small nonnegative unit-mass kernel. Each
stage runs four modules in order:

 1. kernel_gradient_step   descent on ||convolve(u, h) - g||^2 in h,
                           restricted to the kernel support
 2. kernel_prox_normalize  shrinkage of kernel features (soft rule), then
                           clamp to >= 0 and rescale to unit mass
 3. image_gradient_step    descent on the same fidelity in u
 4. image_prox_step        lp shrinkage of image features (gst rule)

Safe step sizes follow from the periodic-boundary operator norms: the
kernel step contracts for mu < 2 / operator_norm(u)^2 and the image step
for rho < 2 / operator_norm(h)^2, where the image itself acts as the
convolution operator in the kernel step. The kernel-support restriction
in step 1 uses the exact periodic adjoint; under the reflect boundary it
is an approximation near the borders.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateKernelError, ValidationError
from .grids import (
    as_image,
    as_kernel,
    convolve,
    correlate_into_kernel,
    flip,
    gaussian_kernel,
    normalize_kernel,
    BOUNDARY_MODES,
)
from .shrinkage import DEFAULT_GST, GstConfig, sigmoid
from .transforms import (
    FeaturePyramid,
    TransformSpec,
    analyze,
    regularizer_value,
    scale_count,
    synthesize,
    threshold_pyramid,
)


def _correction_pyramid(pyr):
    """Mute the parts the shrinkage never touches before a residual synthesis.

    In residual skip mode the identity path already carries the low
    frequencies, so the synthesized correction must not add the exempt
    approximation stack or the stored means back a second time.
    """
    stacks = [s.copy() for s in pyr.stacks]
    if pyr.approx_index is not None:
        stacks[pyr.approx_index] = np.zeros_like(stacks[pyr.approx_index])
    mean = None if pyr.mean is None else np.zeros_like(pyr.mean)
    return FeaturePyramid(stacks, approx_index=pyr.approx_index, mean=mean)


@dataclass
class StageParams:
    """Learnable scalars of one stage.

    mu and rho are gradient step sizes (positive), theta1 the kernel-feature
    threshold, theta2 the per-scale image-feature thresholds. p0 is the
    unconstrained norm parameter shared across stages in training, squashed
    to p = sigmoid(p0) in (0, 1). lambda1 and lambda2 only weight the two
    regularizers when the objective is reported; the stages never use them.
    """

    mu: float = 1.0
    rho: float = 1.0
    theta1: float = 1e-3
    theta2: tuple = (1e-3, 1e-3, 1e-3)
    p0: float = 2.0
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        self.theta2 = tuple(float(t) for t in np.atleast_1d(self.theta2))
        if self.mu < 0 or self.rho < 0:
            raise ValidationError("step sizes mu and rho must be >= 0")
        if self.theta1 < 0 or any(t < 0 for t in self.theta2):
            raise ValidationError("thresholds must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValidationError("lambda weights must be >= 0")

    @property
    def p(self):
        return float(sigmoid(self.p0))


@dataclass
class UnfoldConfig:
    """Engine structure plus the per-stage parameters."""

    stages: int = 3
    kernel_size: int = 15
    image_transform: TransformSpec = field(default_factory=lambda: TransformSpec("haar-wavelet"))
    kernel_transform: TransformSpec = field(default_factory=lambda: TransformSpec("identity"))
    boundary: str = "periodic"
    params: list = None
    gst: GstConfig = DEFAULT_GST

    def __post_init__(self):
        if self.stages < 1:
            raise ValidationError(f"stage count must be >= 1, got {self.stages}")
        if self.kernel_size < 1 or self.kernel_size % 2 != 1:
            raise ValidationError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValidationError(f"unknown boundary mode {self.boundary!r}")
        if self.params is None:
            s = scale_count(self.image_transform)
            self.params = [
                StageParams(theta2=(1e-3,) * s) for _ in range(self.stages)
            ]
        if len(self.params) != self.stages:
            raise ValidationError(
                f"expected {self.stages} StageParams, got {len(self.params)}"
            )


@dataclass
class StageRecord:
    s: np.ndarray
    h: np.ndarray
    r: np.ndarray
    u: np.ndarray
    fidelity: float
    objective: float


@dataclass
class RunTrace:
    initial_fidelity: float
    records: list


def init_state(g, cfg):
    """Initial iterate: the blurred image itself and a mild Gaussian kernel."""
    g = as_image(g, entry_point=True)
    if cfg.kernel_size > min(g.shape[0], g.shape[1]):
        raise ValidationError("kernel_size exceeds the image")
    return g.copy(), gaussian_kernel(cfg.kernel_size, 1.0)


def data_fidelity(u, h, g, boundary="periodic"):
    """Squared residual norm ||convolve(u, h) - g||^2."""
    resid = convolve(u, h, boundary) - g
    return float((resid * resid).sum())


def kernel_gradient_step(h, u, g, mu, boundary="periodic"):
    """Gradient descent on the fidelity with respect to the kernel.

    The residual is correlated against the image and restricted to the
    kernel support, which is the exact adjoint of the forward map under
    the periodic boundary. Descends for mu < 2 / operator_norm(u)^2.
    """
    if mu < 0:
        raise ValidationError("mu must be >= 0")
    h = as_kernel(h)
    resid = convolve(u, h, boundary) - g
    grad = correlate_into_kernel(u, resid, h.shape[0])
    return h - mu * grad


def kernel_prox_normalize(s, spec, theta1, gst_config=DEFAULT_GST):
    """Shrink kernel features with the soft rule, then project to a valid kernel.

    Direct skip mode replaces s by the synthesized correction; residual mode
    adds it. Negative entries are clamped and the result rescaled to unit
    mass. A kernel with nothing positive left raises DegenerateKernelError.
    """
    s = as_kernel(s)
    pyr = analyze(s, spec)
    shrunk = threshold_pyramid(pyr, [theta1] * pyr.n_scales, op="soft")
    if spec.effective_skip_mode == "residual":
        half = s + synthesize(_correction_pyramid(shrunk), spec)
    else:
        half = synthesize(shrunk, spec)
    return normalize_kernel(half)


def image_gradient_step(u, h, g, rho, boundary="periodic"):
    """Gradient descent on the fidelity with respect to the image.

    Uses the flipped kernel as the adjoint filter. Descends for
    rho < 2 / operator_norm(h)^2 (which is at most 1 for a unit-mass
    nonnegative kernel, so rho < 2 is always safe there).
    """
    if rho < 0:
        raise ValidationError("rho must be >= 0")
    resid = convolve(u, h, boundary) - g
    return u - rho * convolve(resid, flip(h), boundary)


def image_prox_step(r, spec, theta2, p, gst_config=DEFAULT_GST):
    """lp shrinkage of image features with per-scale thresholds.

    theta2 must provide one threshold per shrinkable scale. p in (0, 1]
    selects the penalty exponent inside the gst rule.
    """
    r = as_image(r)
    pyr = analyze(r, spec)
    shrunk = threshold_pyramid(pyr, theta2, op="gst", p=p, config=gst_config)
    if spec.effective_skip_mode == "residual":
        corr = synthesize(_correction_pyramid(shrunk), spec)
        # synthesize drops a singleton channel axis; mirror that on r
        return (r[:, :, 0] if r.ndim == 3 and corr.ndim == 2 else r) + corr
    return synthesize(shrunk, spec)


def objective(u, h, g, cfg, params):
    """Reported objective: fidelity + lambda1 * kernel l1 + lambda2 * image lp.

    The sums run over the shrinkable feature stacks, matching what the
    prox modules actually touch (the exempt approximation band does not
    contribute). Reporting only; no stage minimizes this directly.
    """
    fid = data_fidelity(u, h, g, cfg.boundary)
    kterm = 0.0
    if params.lambda1 > 0:
        kterm = params.lambda1 * regularizer_value(analyze(h, cfg.kernel_transform), p=1.0)
    iterm = 0.0
    if params.lambda2 > 0:
        iterm = params.lambda2 * regularizer_value(
            analyze(u, cfg.image_transform), p=params.p
        )
    return fid + kterm + iterm


def run(g, cfg):
    """Run all stages on a blurred observation.

    Returns (u_K, h_K, trace) where the trace holds every intermediate
    of every stage plus fidelity and objective values. Deterministic:
    identical inputs give bit-identical outputs.
    """
    g = as_image(g, entry_point=True)
    u, h = init_state(g, cfg)
    records = []
    trace = RunTrace(initial_fidelity=data_fidelity(u, h, g, cfg.boundary), records=records)
    for k, pk in enumerate(cfg.params):
        s = kernel_gradient_step(h, u, g, pk.mu, cfg.boundary)
        try:
            h = kernel_prox_normalize(s, cfg.kernel_transform, pk.theta1, cfg.gst)
        except DegenerateKernelError as exc:
            raise DegenerateKernelError(f"stage {k + 1}: {exc}") from exc
        r = image_gradient_step(u, h, g, pk.rho, cfg.boundary)
        u = image_prox_step(r, cfg.image_transform, pk.theta2, pk.p, cfg.gst)
        records.append(
            StageRecord(
                s=s,
                h=h,
                r=r,
                u=u,
                fidelity=data_fidelity(u, h, g, cfg.boundary),
                objective=objective(u, h, g, cfg, pk),
            )
        )
    return u, h, trace


def trace_records(trace):
    """Flatten a RunTrace to JSON-ready dicts, one per stage.

    Kernel-sized arrays are stored in full; image-sized intermediates are
    summarized by SHA-256 of their raw bytes so reruns can be compared
    bit for bit without megabyte traces.
    """

    def digest(a):
        return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()

    rows = [{"stage": 0, "fidelity": trace.initial_fidelity}]
    for k, rec in enumerate(trace.records):
        rows.append(
            {
                "stage": k + 1,
                "fidelity": rec.fidelity,
                "objective": rec.objective,
                "s": [[float(v) for v in row] for row in rec.s],
                "h": [[float(v) for v in row] for row in rec.h],
                "r_sha256": digest(rec.r),
                "u_sha256": digest(rec.u),
            }
        )
    return rows


def write_trace(path, trace):
    rows = trace_records(trace)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
