"""Scalar shrinkage rules applied elementwise to feature coefficients.

Two rules are provided. soft() is the classical l1 proximal map. gst()
generalizes it to lp penalties with p in (0, 1]: it solves

    min_x  0.5 * (x - y)^2 + theta * |x|^p

approximately, by a short fixed-point recursion on the shrunk magnitude.
Below a closed-form threshold tau_p(theta) the exact solution is 0; above
it the recursion converges to the nonzero stationary point. At p = 1 both
the threshold and the recursion collapse to the soft rule exactly.

prox_oracle() is a deliberately dumb grid search over the same objective;
it exists so the fast paths can be checked against something that cannot
share their bugs.

All rules are odd in y, nonexpansive in practice, and vectorize over
arrays with elementwise results identical to the scalar path.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class GstConfig:
    """Fixed-point settings for gst: iteration count and stabilizer."""

    n: int = 3
    delta: float = 1e-5

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"gst iteration count must be >= 1, got {self.n}")
        if self.delta < 0:
            raise ValidationError(f"gst delta must be >= 0, got {self.delta}")


DEFAULT_GST = GstConfig()


def sigmoid(x):
    """Numerically stable logistic squash 1 / (1 + exp(-x))."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def _check_theta_p(theta, p):
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be finite and >= 0")
    if not (0.0 < p <= 1.0):
        raise ValidationError(f"p must lie in (0, 1], got {p}")
    return theta


def soft(y, theta):
    """Soft threshold sign(y) * max(|y| - theta, 0)."""
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0):
        raise ValidationError("theta must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    out = np.sign(y) * np.maximum(np.abs(y) - theta, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def tau_p(theta, p):
    """Dead-zone half-width of the lp shrinkage rule.

    tau = (2*theta*(1-p))**(1/(2-p)) + theta*p*(2*theta*(1-p))**((p-1)/(2-p))

    For |y| <= tau the penalized objective is minimized at 0; above it a
    nonzero stationary point wins. The p = 1 limit uses the convention
    0**0 = 1, which recovers the soft threshold tau = theta. theta = 0
    gives tau = 0 for every p.
    """
    theta = _check_theta_p(theta, p)
    if p == 1.0:
        out = theta * 1.0
    else:
        base = 2.0 * theta * (1.0 - p)
        root = base ** (1.0 / (2.0 - p))
        # theta = 0 would hit 0**negative in the second factor; the limit is 0
        second = np.where(
            theta > 0,
            theta * p * np.where(base > 0, base, 1.0) ** ((p - 1.0) / (2.0 - p)),
            0.0,
        )
        out = root + second
    out = np.asarray(out, dtype=np.float64)
    if out.ndim == 0:
        return float(out)
    return out


def gst(y, theta, p, config=DEFAULT_GST):
    """Generalized soft threshold for the lp penalty, p in (0, 1].

    Zero inside the dead zone |y| <= tau_p(theta); otherwise the magnitude
    is iterated n times from S_0 = |y|:

        S_m = |y| - theta * p * (S_{m-1} + delta)**(p - 1)

    and the result is sign(y) * S_n. For entries above the dead zone the
    iterates stay positive, so the fractional power is well defined. At
    p = 1 the recursion is exact after one step and equals soft(y, theta).
    """
    theta = _check_theta_p(theta, p)
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 0 and theta.ndim == 0
    ay = np.abs(y)
    tau = np.asarray(tau_p(theta, p), dtype=np.float64)
    s = ay * 1.0
    for _ in range(config.n):
        # the clamp only guards dead-zone entries that get discarded below
        base = np.maximum(s + config.delta, 1e-300)
        s = ay - theta * p * base ** (p - 1.0)
    out = np.where(ay > tau, np.sign(y) * s, 0.0)
    if scalar:
        return float(out)
    return out


def prox_oracle(y, theta, p, grid_step=1e-4):
    """Brute-force argmin of 0.5*(x - y)**2 + theta*|x|**p on a grid.

    Scans x over [0, |y|] in steps of grid_step (the minimizer always has
    the sign of y and magnitude at most |y|), breaking ties toward 0, and
    restores the sign at the end. Scalar only; accuracy is limited by the
    grid, so comparisons should allow a tolerance of about grid_step.
    """
    theta = float(theta)
    p = float(p)
    if theta < 0:
        raise ValidationError("theta must be >= 0")
    if not (0.0 < p <= 1.0):
        raise ValidationError(f"p must lie in (0, 1], got {p}")
    if grid_step <= 0:
        raise ValidationError("grid_step must be positive")
    y = float(y)
    ay = abs(y)
    if ay == 0.0:
        return 0.0
    grid = np.arange(0.0, ay + grid_step, grid_step)
    obj = 0.5 * (grid - ay) ** 2 + theta * grid ** p
    best = grid[int(np.argmin(obj))]
    return float(np.sign(y) * best)
