"""XVT1 flat binary tensor format.

Layout: magic ``b"XVT1"``, rank as uint64 LE, ``rank`` dims as uint64 LE,
then the row-major payload as float64 LE.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError
from .tensor import Tensor

MAGIC = b"XVT1"


def dumps(x):
    arr = np.ascontiguousarray(x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64))
    header = MAGIC + struct.pack(f"<{arr.ndim + 1}Q", arr.ndim, *arr.shape)
    return header + arr.astype("<f8").tobytes()


def loads(buf):
    if buf[:4] != MAGIC:
        raise ContractError("not an XVT1 tensor (bad magic)")
    (rank,) = struct.unpack_from("<Q", buf, 4)
    dims = struct.unpack_from(f"<{rank}Q", buf, 12)
    start = 12 + 8 * rank
    count = int(np.prod(dims)) if rank else 1
    if len(buf) - start != 8 * count:
        raise ContractError(f"payload size {len(buf) - start} does not match dims {dims}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=start)
    return data.astype(np.float64).reshape(dims)


def save(path, x):
    Path(path).write_bytes(dumps(x))


def load(path):
    """Read an XVT1 file into a float64 ndarray."""
    return loads(Path(path).read_bytes())


def mask_path(path):
    return Path(str(path) + ".mask")


def save_depth(path, depth, mask=None):
    """Write a depth map plus its sidecar validity mask (``<path>.mask``)."""
    depth = np.asarray(depth.data if isinstance(depth, Tensor) else depth, dtype=np.float64)
    if mask is None:
        mask = np.isfinite(depth) & (depth > 0)
    save(path, depth)
    save(mask_path(path), np.asarray(mask, dtype=np.float64))


def load_depth(path):
    """Return ``(depth, mask)``; a missing sidecar means depth > 0 is valid."""
    depth = load(path)
    mp = mask_path(path)
    mask = load(mp) > 0.5 if mp.exists() else depth > 0
    return depth, mask
