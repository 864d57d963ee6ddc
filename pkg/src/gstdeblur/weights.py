"""Binary serialization of named tensor bundles.

Layout, all integers little-endian unsigned 32-bit:

    magic   4 bytes  b"MGST"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor, sorted by name:
        name_len u32, name utf-8 bytes,
        rank u32, dims u32 * rank,
        payload float32 little-endian, C order

Files are read fully into memory before decoding, so a truncated file
fails cleanly instead of yielding a partial bundle.
"""

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"MGST"
VERSION = 1


def save_weights(path, bundle):
    """Write a name -> array dict. Tensors are stored sorted by name, float32."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(bundle))
    for name in sorted(bundle):
        # asarray keeps rank 0 intact where ascontiguousarray would promote it
        arr = np.asarray(bundle[name], dtype="<f4", order="C")
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_weights(path, expected=None):
    """Read a bundle back as float64 arrays.

    expected, if given, maps tensor names to shapes; missing tensors,
    unexpected tensors, and shape mismatches raise FormatError naming the
    offender.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(view):
            raise FormatError(f"truncated weights file while reading {what}")
        chunk = view[off:off + n]
        off += n
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported weights version {version}")
    bundle = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        n = int(np.prod(dims)) if rank else 1
        payload = take(4 * n, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
        bundle[name] = arr
    if off != len(view):
        raise FormatError(f"{len(view) - off} trailing bytes after last tensor")
    if expected is not None:
        for name, shape in expected.items():
            if name not in bundle:
                raise FormatError(f"missing tensor {name}")
            if bundle[name].shape != tuple(shape):
                raise FormatError(
                    f"tensor {name} has shape {bundle[name].shape}, "
                    f"expected {tuple(shape)}"
                )
        extra = set(bundle) - set(expected)
        if extra:
            raise FormatError(f"unexpected tensors: {sorted(extra)}")
    return bundle
