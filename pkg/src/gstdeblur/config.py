"""Plain-text configuration: one `key = value` per line.

Grammar: blank lines and lines starting with # are skipped; a trailing
# comment after the value is stripped; keys are dotted lowercase words.
Per-stage engine parameters use 1-based stage indices and 0-based scale
indices, e.g.

    stages = 3
    image_transform.kind = haar-wavelet
    stage.2.rho = 0.8
    stage.2.theta2.0 = 1e-3

Training settings live under the train. prefix in the same file. Unknown
keys and duplicate keys are errors, so typos fail loudly instead of being
ignored.
"""

import hashlib
import re

from .errors import ValidationError
from .shrinkage import GstConfig
from .transforms import TransformSpec, scale_count
from .unfold import StageParams, UnfoldConfig
from .training import TrainConfig

_KEY_RE = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_-]+)*$")

_TOP_KEYS = {
    "stages",
    "kernel_size",
    "boundary",
    "p0",
    "lambda1",
    "lambda2",
    "weights",
    "gst.n",
    "gst.delta",
}
_TRANSFORM_KEYS = {"kind", "levels", "skip_mode", "channels", "base_channels", "reduction", "rcab_per_scale"}
_TRAIN_KEYS = {
    "epochs",
    "batch_size",
    "lr",
    "lr_final",
    "lr_drop_epoch",
    "alpha",
    "eps1",
    "fd_step",
    "seed",
}
_STAGE_KEY_RE = re.compile(r"^stage\.(\d+)\.(mu|rho|theta1|theta2\.(\d+))$")


def parse_config(text):
    """Parse config text into an ordered {key: value-string} mapping."""
    mapping = {}
    for ln_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {ln_no}: expected `key = value`")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ValidationError(f"config line {ln_no}: bad key {key!r}")
        if not value:
            raise ValidationError(f"config line {ln_no}: empty value for {key!r}")
        if key in mapping:
            raise ValidationError(f"config line {ln_no}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def read_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_hash(mapping):
    """Stable digest of a parsed mapping: sha256 over sorted canonical lines."""
    canon = "\n".join(f"{k} = {mapping[k]}" for k in sorted(mapping))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _validate_keys(mapping):
    unknown = []
    for key in mapping:
        if key in _TOP_KEYS:
            continue
        parts = key.split(".", 1)
        if parts[0] in ("image_transform", "kernel_transform") and len(parts) == 2:
            if parts[1] in _TRANSFORM_KEYS:
                continue
        if parts[0] == "train" and len(parts) == 2 and parts[1] in _TRAIN_KEYS:
            continue
        if _STAGE_KEY_RE.match(key):
            continue
        unknown.append(key)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")


def _get(mapping, key, convert, default=None):
    if key not in mapping:
        return default
    raw = mapping[key]
    try:
        return convert(raw)
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"config key {key}: bad value {raw!r}") from exc


def _transform_spec(mapping, prefix, default_kind):
    kind = _get(mapping, f"{prefix}.kind", str, default_kind)
    spec = TransformSpec(
        kind=kind,
        levels=_get(mapping, f"{prefix}.levels", int, 3),
        skip_mode=_get(mapping, f"{prefix}.skip_mode", str, None),
        channels=_get(mapping, f"{prefix}.channels", int, 1),
        base_channels=_get(mapping, f"{prefix}.base_channels", int, 16),
        reduction=_get(mapping, f"{prefix}.reduction", int, 4),
        rcab_per_scale=_get(mapping, f"{prefix}.rcab_per_scale", int, 2),
    )
    return spec


def unfold_config_from_mapping(mapping, require_stage_params=True):
    """Build an UnfoldConfig from parsed keys.

    Stage parameters are required by default (a deblur run needs fitted
    values, usually from a train run's output). With
    require_stage_params=False missing stages fall back to StageParams
    defaults, which is only sensible as a training starting template.
    """
    _validate_keys(mapping)
    stages = _get(mapping, "stages", int, 3)
    image_spec = _transform_spec(mapping, "image_transform", "haar-wavelet")
    kernel_spec = _transform_spec(mapping, "kernel_transform", "identity")
    n_scales = scale_count(image_spec)
    p0 = _get(mapping, "p0", float, 2.0)
    lambda1 = _get(mapping, "lambda1", float, 0.0)
    lambda2 = _get(mapping, "lambda2", float, 0.0)

    stage_vals = {}
    for key in mapping:
        m = _STAGE_KEY_RE.match(key)
        if not m:
            continue
        idx = int(m.group(1))
        if not (1 <= idx <= stages):
            raise ValidationError(f"config key {key}: stage index out of range 1..{stages}")
        stage_vals.setdefault(idx, {})[m.group(2)] = float(mapping[key])

    params = []
    for k in range(1, stages + 1):
        vals = stage_vals.get(k, {})
        if require_stage_params and not vals:
            raise ValidationError(
                f"missing stage.{k}.* parameters; run training or supply them"
            )
        theta2 = []
        for s in range(n_scales):
            dotted = f"theta2.{s}"
            if dotted in vals:
                theta2.append(vals.pop(dotted))
            elif require_stage_params:
                raise ValidationError(f"missing config key stage.{k}.theta2.{s}")
            else:
                theta2.append(1e-3)
        leftovers = [v for v in vals if v.startswith("theta2.")]
        if leftovers:
            raise ValidationError(
                f"stage.{k} has thresholds beyond scale {n_scales - 1}: {leftovers}"
            )
        params.append(
            StageParams(
                mu=vals.get("mu", 1.0),
                rho=vals.get("rho", 1.0),
                theta1=vals.get("theta1", 1e-3),
                theta2=tuple(theta2),
                p0=p0,
                lambda1=lambda1,
                lambda2=lambda2,
            )
        )

    return UnfoldConfig(
        stages=stages,
        kernel_size=_get(mapping, "kernel_size", int, 15),
        image_transform=image_spec,
        kernel_transform=kernel_spec,
        boundary=_get(mapping, "boundary", str, "periodic"),
        params=params,
        gst=GstConfig(
            n=_get(mapping, "gst.n", int, 3),
            delta=_get(mapping, "gst.delta", float, 1e-5),
        ),
    )


def train_config_from_mapping(mapping):
    """Extract the train.* keys into a TrainConfig."""
    _validate_keys(mapping)
    kw = {}
    for key in _TRAIN_KEYS:
        if f"train.{key}" in mapping:
            conv = int if key in ("epochs", "batch_size", "lr_drop_epoch", "seed") else float
            kw[key] = _get(mapping, f"train.{key}", conv)
    return TrainConfig(**kw)


def mapping_from_unfold_config(cfg, extra=None):
    """Serialize an UnfoldConfig (fitted scalars included) back to config keys."""
    mapping = {
        "stages": str(cfg.stages),
        "kernel_size": str(cfg.kernel_size),
        "boundary": cfg.boundary,
        "p0": repr(cfg.params[0].p0),
        "lambda1": repr(cfg.params[0].lambda1),
        "lambda2": repr(cfg.params[0].lambda2),
        "gst.n": str(cfg.gst.n),
        "gst.delta": repr(cfg.gst.delta),
    }
    for prefix, spec in (
        ("image_transform", cfg.image_transform),
        ("kernel_transform", cfg.kernel_transform),
    ):
        mapping[f"{prefix}.kind"] = spec.kind
        mapping[f"{prefix}.levels"] = str(spec.levels)
        if spec.skip_mode is not None:
            mapping[f"{prefix}.skip_mode"] = spec.skip_mode
        if spec.kind == "learned":
            mapping[f"{prefix}.channels"] = str(spec.channels)
            mapping[f"{prefix}.base_channels"] = str(spec.base_channels)
            mapping[f"{prefix}.reduction"] = str(spec.reduction)
            mapping[f"{prefix}.rcab_per_scale"] = str(spec.rcab_per_scale)
    for k, p in enumerate(cfg.params, start=1):
        mapping[f"stage.{k}.mu"] = repr(p.mu)
        mapping[f"stage.{k}.rho"] = repr(p.rho)
        mapping[f"stage.{k}.theta1"] = repr(p.theta1)
        for s, t in enumerate(p.theta2):
            mapping[f"stage.{k}.theta2.{s}"] = repr(t)
    if extra:
        mapping.update(extra)
    return mapping


def dump_config(mapping):
    """Render a mapping as config text, keys sorted for stable output."""
    return "\n".join(f"{k} = {mapping[k]}" for k in sorted(mapping)) + "\n"
