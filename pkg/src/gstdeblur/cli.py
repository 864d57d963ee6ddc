"""Command-line front end.

Subcommands: synth (make degraded data), deblur (run the engine), train
(fit stage scalars), eval (score restored outputs), prox (inspect the
scalar shrinkage rules). Exit codes: 0 success, 1 validation or usage
error, 2 missing or malformed files and environment problems.

Every command that writes artifacts first writes run_header.json (command,
package version, config digest, seed) into the output directory, so any
artifact can be traced to its invocation. Batch commands process images
concurrently; the MGST_THREADS environment variable caps the worker count.
Results do not depend on the worker count: each image draws from its own
random substream and outputs are written in deterministic order.
"""

import argparse
import concurrent.futures
import csv
import json
import os
import sys

from . import __version__
from .config import (
    config_hash,
    dump_config,
    mapping_from_unfold_config,
    read_config,
    train_config_from_mapping,
    unfold_config_from_mapping,
)
from .degrade import make_pair_firstorder, second_order_pipeline, substream
from .errors import (
    CodecUnavailableError,
    DegenerateKernelError,
    FdProbeError,
    FormatError,
    GstdeblurError,
    ValidationError,
)
from .extractor import weight_shapes
from .fileio import read_image, read_kernel, write_image, write_kernel
from .metrics import aggregate_report, kernel_similarity, psnr, ssim
from .shrinkage import GstConfig, gst, prox_oracle, soft, tau_p
from .training import train
from .unfold import run, write_trace
from .weights import load_weights

IMAGE_EXTS = (".png", ".pfm")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _range_pair(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    return (lo, hi)


def _workers():
    raw = os.environ.get("MGST_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"MGST_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ValidationError(f"MGST_THREADS must be >= 1, got {n}")
    return n


def _collect_inputs(path):
    """(stem, path) pairs: a single image file or every image in a directory."""
    if os.path.isfile(path):
        stem = os.path.splitext(os.path.basename(path))[0]
        return [(stem, path)]
    if os.path.isdir(path):
        out = []
        for name in sorted(os.listdir(path)):
            if name.lower().endswith(IMAGE_EXTS):
                out.append((os.path.splitext(name)[0], os.path.join(path, name)))
        if not out:
            raise FormatError(f"no images found in {path}")
        return out
    raise FormatError(f"no such input: {path}")


def _write_header(out_dir, command, argv, cfg_mapping=None, seed=None):
    os.makedirs(out_dir, exist_ok=True)
    header = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config_sha256": config_hash(cfg_mapping) if cfg_mapping is not None else None,
        "seed": seed,
    }
    with open(os.path.join(out_dir, "run_header.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")


def _map_concurrent(fn, items):
    with concurrent.futures.ThreadPoolExecutor(max_workers=_workers()) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------- synth


def _cmd_synth(args, argv):
    inputs = _collect_inputs(args.inp)
    _write_header(args.out, "synth", argv, seed=args.seed)
    first = args.mode == "first-order"
    for sub in ("gt", "blur") + (("kernel",) if first else ()):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)

    def one(item):
        index, (stem, path) = item
        u_gt = read_image(path)
        if args.mode == "first-order":
            rng = substream(args.seed, index)
            g, k, manifest = make_pair_firstorder(
                u_gt,
                rng,
                sigma_range=args.sigma_range,
                noise_std=args.noise,
                kernel_size=args.kernel_size,
                boundary=args.boundary,
            )
        else:
            g, manifest = second_order_pipeline(
                u_gt, args.seed, index=index, boundary=args.boundary
            )
            k = None
        manifest = dict(manifest)
        manifest["image"] = stem
        manifest["index"] = index
        return stem, u_gt, g, k, manifest

    results = _map_concurrent(one, list(enumerate(inputs)))
    with open(os.path.join(args.out, "manifest.jsonl"), "w", encoding="utf-8") as fh:
        for stem, u_gt, g, k, manifest in results:
            write_image(os.path.join(args.out, "gt", stem + ".png"), u_gt)
            write_image(os.path.join(args.out, "blur", stem + ".png"), g)
            if k is not None:
                write_kernel(os.path.join(args.out, "kernel", stem + ".txt"), k)
            fh.write(json.dumps(manifest, sort_keys=True) + "\n")
    return 0


# ------------------------------------------------------------ deblur


def _attach_weights(cfg, weights_path):
    specs = {
        "image": cfg.image_transform,
        "kernel": cfg.kernel_transform,
    }
    expected = {}
    for prefix, spec in specs.items():
        if spec.kind == "learned":
            for name, shape in weight_shapes(spec).items():
                expected[f"{prefix}.{name}"] = shape
    if not expected:
        raise ValidationError("config has no learned transform; --weights is unused")
    if weights_path is None:
        raise ValidationError("learned transform requires --weights or a weights key")
    bundle = load_weights(weights_path, expected=expected)
    for prefix, spec in specs.items():
        if spec.kind == "learned":
            spec.weights = {
                name[len(prefix) + 1:]: arr
                for name, arr in bundle.items()
                if name.startswith(prefix + ".")
            }


def _cmd_deblur(args, argv):
    mapping = read_config(args.config)
    cfg = unfold_config_from_mapping(mapping)
    weights_path = args.weights or mapping.get("weights")
    if cfg.image_transform.kind == "learned" or cfg.kernel_transform.kind == "learned":
        _attach_weights(cfg, weights_path)
    elif args.weights:
        raise ValidationError("config has no learned transform; --weights is unused")
    inputs = _collect_inputs(args.inp)
    _write_header(args.out, "deblur", argv, cfg_mapping=mapping)

    def one(item):
        stem, path = item
        g = read_image(path)
        u, h, trace = run(g, cfg)
        return stem, u, h, trace

    results = _map_concurrent(one, inputs)
    for stem, u, h, trace in results:
        write_image(os.path.join(args.out, stem + ".png"), u)
        write_kernel(os.path.join(args.out, stem + ".kernel.txt"), h)
        write_trace(os.path.join(args.out, stem + ".trace.jsonl"), trace)
    return 0


# ------------------------------------------------------------- train


def _cmd_train(args, argv):
    mapping = read_config(args.config)
    cfg = unfold_config_from_mapping(mapping, require_stage_params=False)
    tcfg = train_config_from_mapping(mapping)
    blur_dir = os.path.join(args.data, "blur")
    gt_dir = os.path.join(args.data, "gt")
    if not os.path.isdir(blur_dir) or not os.path.isdir(gt_dir):
        raise FormatError(f"{args.data} must contain blur/ and gt/ directories")
    dataset = []
    for stem, path in _collect_inputs(blur_dir):
        gt_path = os.path.join(gt_dir, stem + ".png")
        if not os.path.exists(gt_path):
            raise FormatError(f"missing ground truth for {stem}")
        dataset.append((read_image(path), read_image(gt_path)))
    _write_header(args.out, "train", argv, cfg_mapping=mapping, seed=tcfg.seed)
    fitted, log_rows = train(dataset, tcfg, cfg)
    fitted_mapping = mapping_from_unfold_config(fitted)
    with open(os.path.join(args.out, "fitted.cfg"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(fitted_mapping))
    with open(os.path.join(args.out, "train_log.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss", "char", "kern"])
        for row in log_rows:
            writer.writerow(
                [row["step"], repr(row["lr"]), repr(row["loss"]),
                 repr(row["char"]), repr(row["kern"])]
            )
    return 0


# -------------------------------------------------------------- eval


def _cmd_eval(args, argv):
    preds = [
        (stem, path)
        for stem, path in _collect_inputs(args.pred)
        if not stem.endswith(".kernel")
    ]
    if args.out is None:
        args.out = args.pred
    _write_header(args.out, "eval", argv)
    rows = []
    for stem, path in preds:
        gt_path = os.path.join(args.gt, stem + ".png")
        if not os.path.exists(gt_path):
            raise FormatError(f"missing ground truth for {stem}")
        pred = read_image(path)
        gt = read_image(gt_path)
        row = {"name": stem, "psnr": psnr(pred, gt), "ssim": ssim(pred, gt)}
        if args.kernels:
            est_path = os.path.join(args.pred, stem + ".kernel.txt")
            ref_path = os.path.join(args.kernels, stem + ".txt")
            if not os.path.exists(est_path):
                raise FormatError(f"missing estimated kernel for {stem}")
            if not os.path.exists(ref_path):
                raise FormatError(f"missing reference kernel for {stem}")
            row.update(kernel_similarity(read_kernel(est_path), read_kernel(ref_path)))
        rows.append(row)
    fields = ["name", "psnr", "ssim"] + (["mnc", "mse", "rmse"] if args.kernels else [])
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row["name"]] + [repr(row[f]) for f in fields[1:]])
    report = {"rows": rows, "summary": aggregate_report(rows)}
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=1) + "\n")
    return 0


# -------------------------------------------------------------- prox


def _cmd_prox(args, argv):
    cfgd = GstConfig(n=args.n)
    print(f"tau = {tau_p(args.theta, args.p)!r}")
    print(f"soft = {soft(args.y, args.theta)!r}")
    print(f"gst = {gst(args.y, args.theta, args.p, cfgd)!r}")
    print(f"oracle = {prox_oracle(args.y, args.theta, args.p, args.grid_step)!r}")
    return 0


# -------------------------------------------------------------- main


def _build_parser():
    parser = _Parser(prog="gstdeblur", description="blind deblurring toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="degrade clean images into paired data")
    p.add_argument("--in", dest="inp", required=True, help="image file or directory")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--mode", choices=("first-order", "second-order"), default="first-order"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-range", type=_range_pair, default=(0.2, 4.0),
                   help="lo,hi bounds for the blur standard deviation")
    p.add_argument("--noise", type=float, default=0.0,
                   help="first-order noise standard deviation on the [0,1] scale")
    p.add_argument("--kernel-size", type=int, default=15)
    p.add_argument("--boundary", choices=("periodic", "reflect"), default=None)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("deblur", help="run the unfolding engine")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_deblur)

    p = sub.add_parser("train", help="fit stage scalars on synth output")
    p.add_argument("--data", required=True, help="directory with gt/ and blur/")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="score restored images against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--kernels", default=None)
    p.add_argument("--out", default=None, help="report directory (default: --pred)")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("prox", help="evaluate the scalar shrinkage rules")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--grid-step", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_prox)

    return parser


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "synth" and args.boundary is None:
        args.boundary = "periodic" if args.mode == "first-order" else "reflect"
    try:
        return args.fn(args, argv)
    except (FormatError, CodecUnavailableError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ValidationError, DegenerateKernelError, FdProbeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except GstdeblurError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
