"""Reading and writing images and kernels.

PNG (8- or 16-bit, grayscale or RGB) goes through OpenCV; intensities map
linearly to [0, 1] and quantization happens only here, at the file edge.
PFM stores float32 without quantization, following the usual convention:
"Pf"/"PF" header, width and height, a scale whose sign encodes byte order,
rows bottom to top. Kernels use a trivial text format:

    KERNEL <size>
    <size rows of <size> decimal entries>

All readers raise FormatError on malformed content.
"""

import os

import cv2
import numpy as np

from .errors import FormatError, ValidationError
from .grids import as_image, as_kernel


def read_image(path):
    """Load a PNG or PFM as float64 in [0, 1] (PFM values pass unclipped)."""
    if not os.path.exists(path):
        raise FormatError(f"no such image file: {path}")
    if str(path).lower().endswith(".pfm"):
        return _read_pfm(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"could not decode image: {path}")
    if raw.ndim == 3 and raw.shape[2] == 4:
        raise ValidationError(f"alpha channels are not supported: {path}")
    if raw.dtype == np.uint8:
        x = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        x = raw.astype(np.float64) / 65535.0
    else:
        raise FormatError(f"unsupported PNG sample type {raw.dtype} in {path}")
    if x.ndim == 3:
        x = x[:, :, ::-1].copy()  # OpenCV loads BGR
    return x


def write_image(path, x, bit_depth=16):
    """Write an image, clipping to [0, 1]. PNG quantizes; .pfm keeps floats."""
    x = as_image(x)
    if str(path).lower().endswith(".pfm"):
        _write_pfm(path, x)
        return
    if bit_depth not in (8, 16):
        raise ValidationError(f"bit_depth must be 8 or 16, got {bit_depth}")
    peak = 255 if bit_depth == 8 else 65535
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    q = np.rint(np.clip(x, 0.0, 1.0) * peak).astype(dtype)
    if q.ndim == 3 and q.shape[2] == 3:
        q = q[:, :, ::-1]  # back to BGR for OpenCV
    elif q.ndim == 3:
        q = q[:, :, 0]
    if not cv2.imwrite(str(path), q):
        raise FormatError(f"could not write image: {path}")


def _read_pfm(path):
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise FormatError(f"bad PFM header {header!r} in {path}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"bad PFM dimension line in {path}")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError(f"bad PFM header numbers in {path}") from exc
        if scale == 0:
            raise FormatError(f"PFM scale must be nonzero in {path}")
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError(f"truncated PFM payload in {path}")
        data = np.frombuffer(raw, dtype=endian + "f4")
    img = data.reshape(height, width, channels).astype(np.float64)
    img = img[::-1]  # rows are stored bottom to top
    if channels == 1:
        return img[:, :, 0].copy()
    return img.copy()


def _write_pfm(path, x):
    if x.ndim == 2:
        data = x[:, :, None]
        header = b"Pf"
    elif x.shape[2] == 1:
        data = x
        header = b"Pf"
    elif x.shape[2] == 3:
        data = x
        header = b"PF"
    else:
        raise ValidationError(f"PFM supports 1 or 3 channels, got {x.shape}")
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")  # negative scale: little-endian
        fh.write(np.ascontiguousarray(data[::-1], dtype="<f4").tobytes())


def read_kernel(path):
    """Parse the text kernel format, validating squareness and finiteness."""
    if not os.path.exists(path):
        raise FormatError(f"no such kernel file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("KERNEL"):
        raise FormatError(f"missing KERNEL header in {path}")
    parts = lines[0].split()
    if len(parts) != 2:
        raise FormatError(f"bad KERNEL header line in {path}")
    try:
        size = int(parts[1])
    except ValueError as exc:
        raise FormatError(f"bad kernel size in {path}") from exc
    if len(lines) - 1 != size:
        raise FormatError(
            f"expected {size} kernel rows in {path}, found {len(lines) - 1}"
        )
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        vals = ln.split()
        if len(vals) != size:
            raise FormatError(f"line {ln_no} of {path} has {len(vals)} entries, expected {size}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError as exc:
            raise FormatError(f"non-numeric kernel entry on line {ln_no} of {path}") from exc
    k = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(k)):
        raise FormatError(f"non-finite kernel entry in {path}")
    try:
        return as_kernel(k)
    except Exception as exc:
        raise FormatError(f"invalid kernel in {path}: {exc}") from exc


def write_kernel(path, k):
    """Write a kernel with full float precision."""
    k = as_kernel(k)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"KERNEL {k.shape[0]}\n")
        for row in k:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
