"""Learned multi-scale feature extractor and its synthesis twin.

Forward-only numpy implementation of a small convolutional encoder/decoder.
The analysis net lifts a grid to one feature stack per scale; the synthesis
net fuses the (possibly shrunk) stacks back into a grid. Building blocks:

 * 3x3 same convolutions with zero padding,
 * residual blocks with channel attention: two convolutions, a global
   average pool squeezed through a bottleneck, a logistic gate in (0, 1)
   scaling the residual branch, then the identity skip. Zeroing the second
   convolution's weights and bias makes the block an exact identity.
 * parameter-free dyadic resampling between scales and concatenation plus
   a 1x1 convolution where decoder and skip paths meet.

Weights live in a flat name -> float array dict (a "bundle"). The expected
names and shapes are enumerated by weight_shapes(); default_weights() fills
them from a fixed-seed uniform distribution scaled by fan-in, with zero
biases, so an untrained synthesis net maps the zero pyramid to zero.
"""

import numpy as np

from .errors import DimensionError, ValidationError
from .grids import resample
from .shrinkage import sigmoid


def conv2d(x, w, b=None):
    """Same-size 2-D convolution, zero padded. x: (h, w, cin); w: (cout, cin, kh, kw)."""
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = kh // 2, kw // 2
    h, wd = x.shape[:2]
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((h, wd, w.shape[0]), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += xp[i:i + h, j:j + wd, :] @ w[:, :, i, j].T
    if b is not None:
        out = out + b
    return out


def dense(x, w, b=None):
    """Per-pixel linear map (a 1x1 convolution). w: (cout, cin)."""
    out = x @ w.T
    if b is not None:
        out = out + b
    return out


def relu(x):
    return np.maximum(x, 0.0)


def _rcab(x, params, prefix):
    y = conv2d(x, params[prefix + ".conv1.weight"], params[prefix + ".conv1.bias"])
    y = relu(y)
    y = conv2d(y, params[prefix + ".conv2.weight"], params[prefix + ".conv2.bias"])
    pooled = y.mean(axis=(0, 1))
    z = relu(params[prefix + ".ca.reduce.weight"] @ pooled + params[prefix + ".ca.reduce.bias"])
    gate = sigmoid(params[prefix + ".ca.expand.weight"] @ z + params[prefix + ".ca.expand.bias"])
    return x + y * gate


def _rcab_chain(x, params, prefix, count):
    for r in range(count):
        x = _rcab(x, params, f"{prefix}.rcab{r}")
    return x


def _check_input(x3, spec):
    if x3.ndim != 3:
        raise DimensionError(f"extractor input must be 3-D, got shape {x3.shape}")
    if x3.shape[2] != spec.channels:
        raise DimensionError(
            f"extractor configured for {spec.channels} channels, got {x3.shape[2]}"
        )
    div = 1 << (spec.levels - 1)
    if x3.shape[0] % div or x3.shape[1] % div:
        raise DimensionError(
            f"learned transform with {spec.levels} scales needs dimensions "
            f"divisible by {div}, got {x3.shape[0]}x{x3.shape[1]}"
        )


def _bundle(spec):
    if spec.weights is None:
        raise ValidationError("learned transform has no weight bundle attached")
    return spec.weights


def analyze_features(x3, spec):
    """Encoder plus decoder emitting one stack per scale, finest first.

    Stack s has spatial size (H / 2**s, W / 2**s) and base_channels
    channels. The encoder walks down with residual blocks, the decoder
    walks back up fusing skip features, and a per-scale head emits the
    final stack on the way.
    """
    _check_input(x3, spec)
    params = _bundle(spec)
    levels, r = spec.levels, spec.rcab_per_scale
    cur = conv2d(x3, params["enc.head.weight"], params["enc.head.bias"])
    enc = []
    for s in range(levels):
        cur = _rcab_chain(cur, params, f"enc.s{s}", r)
        enc.append(cur)
        if s < levels - 1:
            cur = resample(cur, "down2")
    outs = [None] * levels
    d = enc[levels - 1]
    for s in range(levels - 1, -1, -1):
        if s < levels - 1:
            d = resample(d, "up2")
            skip = _rcab_chain(enc[s], params, f"skip.s{s}", r)
            d = dense(
                np.concatenate([d, skip], axis=2),
                params[f"dec.s{s}.fuse.weight"],
                params[f"dec.s{s}.fuse.bias"],
            )
        d = _rcab_chain(d, params, f"dec.s{s}", r)
        outs[s] = conv2d(d, params[f"out.s{s}.weight"], params[f"out.s{s}.bias"])
    return outs


def synthesize_features(stacks, spec):
    """Fuse per-scale stacks back into a grid of spec.channels channels."""
    params = _bundle(spec)
    levels, r = spec.levels, spec.rcab_per_scale
    if len(stacks) != levels:
        raise DimensionError(f"expected {levels} stacks, got {len(stacks)}")
    for s, stack in enumerate(stacks):
        if stack.ndim != 3 or stack.shape[2] != spec.base_channels:
            raise DimensionError(
                f"stack {s} must have {spec.base_channels} channels, "
                f"got shape {stack.shape}"
            )
    d = _rcab_chain(stacks[levels - 1], params, f"syn.s{levels - 1}", r)
    for s in range(levels - 2, -1, -1):
        d = resample(d, "up2")
        d = dense(
            np.concatenate([d, stacks[s]], axis=2),
            params[f"syn.s{s}.fuse.weight"],
            params[f"syn.s{s}.fuse.bias"],
        )
        d = _rcab_chain(d, params, f"syn.s{s}", r)
    return conv2d(d, params["syn.tail.weight"], params["syn.tail.bias"])


def weight_shapes(spec):
    """Expected tensor names and shapes for a spec's analysis + synthesis nets."""
    c, base, red, r = spec.channels, spec.base_channels, spec.reduction, spec.rcab_per_scale
    levels = spec.levels
    shapes = {}

    def add_rcab(prefix):
        shapes[prefix + ".conv1.weight"] = (base, base, 3, 3)
        shapes[prefix + ".conv1.bias"] = (base,)
        shapes[prefix + ".conv2.weight"] = (base, base, 3, 3)
        shapes[prefix + ".conv2.bias"] = (base,)
        shapes[prefix + ".ca.reduce.weight"] = (base // red, base)
        shapes[prefix + ".ca.reduce.bias"] = (base // red,)
        shapes[prefix + ".ca.expand.weight"] = (base, base // red)
        shapes[prefix + ".ca.expand.bias"] = (base,)

    shapes["enc.head.weight"] = (base, c, 3, 3)
    shapes["enc.head.bias"] = (base,)
    for s in range(levels):
        for k in range(r):
            add_rcab(f"enc.s{s}.rcab{k}")
            add_rcab(f"dec.s{s}.rcab{k}")
            add_rcab(f"syn.s{s}.rcab{k}")
        if s < levels - 1:
            for k in range(r):
                add_rcab(f"skip.s{s}.rcab{k}")
            shapes[f"dec.s{s}.fuse.weight"] = (base, 2 * base)
            shapes[f"dec.s{s}.fuse.bias"] = (base,)
            shapes[f"syn.s{s}.fuse.weight"] = (base, 2 * base)
            shapes[f"syn.s{s}.fuse.bias"] = (base,)
        shapes[f"out.s{s}.weight"] = (base, base, 3, 3)
        shapes[f"out.s{s}.bias"] = (base,)
    shapes["syn.tail.weight"] = (c, base, 3, 3)
    shapes["syn.tail.bias"] = (c,)
    return shapes


def default_weights(spec, seed=0):
    """Fixed-seed bundle: weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.Generator(np.random.Philox(key=(int(seed), 0)))
    bundle = {}
    shapes = weight_shapes(spec)
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith(".bias"):
            bundle[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            bundle[name] = rng.uniform(-bound, bound, size=shape)
    return bundle
