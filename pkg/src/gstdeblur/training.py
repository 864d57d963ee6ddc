"""Desk-scale fitting of the engine's stage scalars.

Only the StageParams scalars are trained, roughly stages * (3 + scales)
values plus one shared norm parameter: step sizes, thresholds, and p0.
Gradients come from central finite differences over a fully unconstrained
reparameterization (log for step sizes, inverse softplus for thresholds,
p0 raw), so every Adam iterate maps back to feasible parameters by
construction.

Initialization matters more than the fitting itself at the default
learning rate, so default_init_params() builds a structured schedule
instead of flat constants:

 - Image steps rho_k follow reciprocal Chebyshev nodes on the squared
   kernel spectrum range, largest first. Uniform safe steps (rho < 2)
   barely recover high frequencies in a handful of stages; the blur
   carries no error at the zero frequency, so an aggressive first step
   is admissible and the feature shrinkage cleans up its overshoot.
 - Kernel steps mu_k rise geometrically to a final value calibrated to
   the data energy (the image acts as the convolution operator in that
   step, so sensible values scale like one over ||g||^2). Early kernel
   steps are held near zero: while the image estimate still equals the
   blurred input, the fidelity pulls the kernel toward the identity.
 - Feature thresholds theta2 decay stage by stage and toward coarser
   scales, matching where the overshoot of the large early image steps
   lives.

A unit mu default would overshoot by orders of magnitude on [0, 1]
images, which finite training at the configured learning rate could
never walk back; calibrate_mu() measures the data instead.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateKernelError, FdProbeError, ValidationError
from .grids import convolve
from .transforms import scale_count
from .unfold import StageParams, run

THETA_FLOOR = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 1
    lr: float = 1e-4
    lr_final: float = 1e-5
    lr_drop_epoch: int | None = None
    alpha: float = 0.05
    eps1: float = 1e-3
    fd_step: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if self.lr <= 0 or self.lr_final <= 0 or self.fd_step <= 0:
            raise ValidationError("lr, lr_final and fd_step must be positive")
        if self.alpha < 0 or self.eps1 <= 0:
            raise ValidationError("alpha must be >= 0 and eps1 > 0")
        if self.lr_drop_epoch is not None and self.lr_drop_epoch < 0:
            raise ValidationError("lr_drop_epoch must be >= 0")

    @property
    def drop_epoch(self):
        if self.lr_drop_epoch is not None:
            return self.lr_drop_epoch
        return math.ceil(0.8 * self.epochs)


# ------------------------------------------------------------- losses


def charbonnier_loss(stage_images, u_gt, eps1=1e-3):
    """Sum over stages of sqrt(||u_k - u_gt||^2 + eps1^2).

    With every stage exactly on target this floors at stages * eps1, not 0.
    """
    total = 0.0
    for u in stage_images:
        d = np.asarray(u, dtype=np.float64) - u_gt
        total += math.sqrt(float((d * d).sum()) + eps1 * eps1)
    return total


def kernel_loss(stage_kernels, u_gt, g, boundary="periodic"):
    """Sum over stages of ||convolve(u_gt, h_k) - g||_1."""
    total = 0.0
    for h in stage_kernels:
        total += float(np.abs(convolve(u_gt, h, boundary) - g).sum())
    return total


def total_loss(char, kern, alpha=0.05):
    """Combine the image and kernel terms: char + alpha * kern."""
    return char + alpha * kern


# ------------------------------------------------- reparameterization


def softplus(x):
    return float(np.logaddexp(0.0, x))


def softplus_inv(y):
    if y < THETA_FLOOR:
        y = THETA_FLOOR
    if y > 30.0:
        return float(y)
    return float(np.log(np.expm1(y)))


def pack_params(params):
    """Flatten StageParams into one unconstrained vector.

    Layout: per stage [log mu, log rho, softplus_inv theta1,
    softplus_inv theta2 per scale], then the shared p0 (taken from the
    first stage) as the final component.
    """
    x = []
    for p in params:
        if p.mu <= 0 or p.rho <= 0:
            raise ValidationError("fitting needs strictly positive step sizes")
        x.append(math.log(p.mu))
        x.append(math.log(p.rho))
        x.append(softplus_inv(p.theta1))
        x.extend(softplus_inv(t) for t in p.theta2)
    x.append(float(params[0].p0))
    return np.asarray(x, dtype=np.float64)


def unpack_params(x, template):
    """Rebuild StageParams from a packed vector; p0 is shared to all stages."""
    x = np.asarray(x, dtype=np.float64)
    n_scales = len(template[0].theta2)
    per = 3 + n_scales
    if x.size != len(template) * per + 1:
        raise ValidationError(
            f"packed vector has {x.size} entries, expected {len(template) * per + 1}"
        )
    p0 = float(x[-1])
    out = []
    for k, tpl in enumerate(template):
        base = k * per
        out.append(
            replace(
                tpl,
                mu=math.exp(x[base]),
                rho=math.exp(x[base + 1]),
                theta1=softplus(x[base + 2]),
                theta2=tuple(softplus(v) for v in x[base + 3:base + 3 + n_scales]),
                p0=p0,
            )
        )
    return out


# ------------------------------------------------------- optimization


def fd_gradient(loss_fn, x, fd_step=1e-4):
    """Central finite differences with per-component relative steps.

    Component i is probed at x_i +- fd_step * max(1, |x_i|). A non-finite
    loss at any probe raises FdProbeError naming the component.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        d = fd_step * max(1.0, abs(float(x[i])))
        xp = x.copy()
        xp[i] += d
        fp = float(loss_fn(xp))
        xm = x.copy()
        xm[i] -= d
        fm = float(loss_fn(xm))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FdProbeError(f"non-finite loss at component {i}")
        grad[i] = (fp - fm) / (2.0 * d)
    return grad


def _fd_gradient_robust(loss_fn, x, f0, fd_step):
    # fallback when some probes blow up: use the finite side, or give up
    # on the component entirely
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        d = fd_step * max(1.0, abs(float(x[i])))
        xp = x.copy()
        xp[i] += d
        fp = float(loss_fn(xp))
        xm = x.copy()
        xm[i] -= d
        fm = float(loss_fn(xm))
        okp, okm = math.isfinite(fp), math.isfinite(fm)
        if okp and okm:
            grad[i] = (fp - fm) / (2.0 * d)
        elif okp and math.isfinite(f0):
            grad[i] = (fp - f0) / d
        elif okm and math.isfinite(f0):
            grad[i] = (f0 - fm) / d
    return grad


def adam_step(x, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. state is None on the first call."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if state is None:
        state = {"m": np.zeros_like(x), "v": np.zeros_like(x), "t": 0}
    state["t"] += 1
    state["m"] = beta1 * state["m"] + (1.0 - beta1) * grad
    state["v"] = beta2 * state["v"] + (1.0 - beta2) * grad * grad
    mhat = state["m"] / (1.0 - beta1 ** state["t"])
    vhat = state["v"] / (1.0 - beta2 ** state["t"])
    return x - lr * mhat / (np.sqrt(vhat) + eps), state


# -------------------------------------------------------- calibration


def calibrate_mu(images, scale=2.5):
    """Final-stage kernel step size from the data energy.

    The kernel gradient is a correlation of the image against the
    residual, so its magnitude grows with the squared image norm; a step
    of scale / median(||g||^2) moves the kernel by roughly `scale` times
    the relative residual level regardless of image size or brightness.
    """
    if not images:
        raise ValidationError("calibrate_mu needs at least one image")
    energies = []
    for g in images:
        z = g.mean(axis=2) if g.ndim == 3 else g
        energies.append(float((z * z).sum()))
    med = float(np.median(energies))
    if med <= 0:
        raise ValidationError("images are identically zero")
    return scale / med


RHO_SPECTRUM_FLOOR = 0.016
RHO_SAFETY = 0.75
MU_STAGE_DECAY = 0.01
THETA2_BASE = 2e-3
THETA2_STAGE_DECAY = 0.55
THETA2_SCALE_DECAY = 0.8


def _rho_ladder(stages):
    """Damped reciprocal Chebyshev nodes on [floor, 1], largest step first.

    The image-step error transfer at squared kernel spectrum value q is
    (1 - rho * q) per stage; placing the roots 1 / rho_k at the Chebyshev
    nodes of the interval keeps the K-stage product small across the
    whole range instead of only near q = 1. The safety factor backs the
    steps off the exact roots because the kernel estimate the steps see
    is itself off, and the shrinkage handles the remainder better than
    a full-length step does.
    """
    lo = RHO_SPECTRUM_FLOOR
    nodes = []
    for k in range(stages):
        ang = (2 * k + 1) * math.pi / (2 * stages)
        nodes.append((1 + lo) / 2 + (1 - lo) / 2 * math.cos(ang))
    return [RHO_SAFETY / x for x in sorted(nodes)]


def default_init_params(cfg, dataset, mu=None):
    """Structured starting schedule; see the module docstring for why."""
    s = scale_count(cfg.image_transform)
    if mu is None:
        mu = calibrate_mu([entry[0] for entry in dataset])
    rhos = _rho_ladder(cfg.stages)
    out = []
    for k in range(cfg.stages):
        mu_k = mu * MU_STAGE_DECAY ** (cfg.stages - 1 - k)
        t_k = THETA2_BASE * THETA2_STAGE_DECAY ** k
        theta2 = tuple(t_k * THETA2_SCALE_DECAY ** j for j in range(s))
        out.append(
            StageParams(mu=mu_k, rho=rhos[k], theta1=2e-5, theta2=theta2, p0=2.0)
        )
    return out


# --------------------------------------------------------------- train


def _batch_loss(x, pairs, cfg, tcfg, template):
    """(total, char, kern) averaged over the batch; inf if a run collapses."""
    try:
        params = unpack_params(x, template)
        run_cfg = replace(cfg, params=params)
    except ValidationError:
        return math.inf, math.inf, math.inf
    tc = tk = 0.0
    for g, u_gt in pairs:
        try:
            _, _, trace = run(g, run_cfg)
        except DegenerateKernelError:
            return math.inf, math.inf, math.inf
        us = [rec.u for rec in trace.records]
        hs = [rec.h for rec in trace.records]
        tc += charbonnier_loss(us, u_gt, tcfg.eps1)
        tk += kernel_loss(hs, u_gt, g, cfg.boundary)
    n = len(pairs)
    return total_loss(tc, tk, tcfg.alpha) / n, tc / n, tk / n


def train(dataset, tcfg, cfg, init_params=None):
    """Fit the stage scalars on (degraded, ground-truth) pairs.

    dataset: list of (g, u_gt) or (g, u_gt, h_gt) arrays; a ground-truth
    kernel is accepted but unused since the kernel term only needs the
    pair. cfg fixes the engine structure; its params field is ignored in
    favor of init_params or the calibrated defaults, since the starting
    point must match the data scale. Returns (fitted_cfg, log_rows) where
    log_rows hold one dict per Adam step with step, epoch, lr, loss,
    char, kern. Deterministic for a fixed seed.
    """
    if not dataset:
        raise ValidationError("training needs at least one pair")
    dataset = [(entry[0], entry[1]) for entry in dataset]
    for g, u_gt in dataset:
        if g.shape != u_gt.shape:
            raise ValidationError("each pair must share one shape")
    if init_params is None:
        init_params = default_init_params(cfg, dataset)
    if len(init_params) != cfg.stages:
        raise ValidationError("init_params length must match cfg.stages")

    x = pack_params(init_params)
    template = unpack_params(x, init_params)
    state = None
    order_rng = np.random.Generator(np.random.Philox(key=(tcfg.seed, 0)))
    log_rows = []
    step = 0
    for epoch in range(tcfg.epochs):
        lr = tcfg.lr_final if epoch >= tcfg.drop_epoch else tcfg.lr
        perm = order_rng.permutation(len(dataset))
        for start in range(0, len(dataset), tcfg.batch_size):
            batch = [dataset[i] for i in perm[start:start + tcfg.batch_size]]
            loss, char, kern = _batch_loss(x, batch, cfg, tcfg, template)

            def scalar_loss(xv):
                return _batch_loss(xv, batch, cfg, tcfg, template)[0]

            try:
                grad = fd_gradient(scalar_loss, x, tcfg.fd_step)
                recovered = False
            except FdProbeError:
                grad = _fd_gradient_robust(scalar_loss, x, loss, tcfg.fd_step)
                recovered = True
            x, state = adam_step(
                x, grad, state, lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps
            )
            row = {
                "step": step,
                "epoch": epoch,
                "lr": lr,
                "loss": loss,
                "char": char,
                "kern": kern,
            }
            if recovered:
                row["probe_recovered"] = True
            log_rows.append(row)
            step += 1
    fitted = replace(cfg, params=unpack_params(x, template))
    return fitted, log_rows
