"""Dense tensor helpers: validation, per-channel statistics, AdaIN and the HAMT dump format.

Tensors are plain :class:`numpy.ndarray` values.  Public operations accept
float32 or float64 arrays and return arrays of the same floating dtype; every
tensor entering or leaving them must be finite.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError

HAMT_MAGIC = b"HAMT"
DEFAULT_EPSILON = 1e-5


def as_tensor(x, name="tensor") -> np.ndarray:
    """Return ``x`` as a finite floating ndarray (float32 unless already float64)."""
    arr = np.asarray(x)
    if arr.dtype != np.float64:
        arr = arr.astype(np.float32, copy=False)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains non-finite values")
    return arr


def _axis(x: np.ndarray, axis: int) -> int:
    if not isinstance(axis, (int, np.integer)) or not -x.ndim <= axis < x.ndim:
        raise ValueError(f"invalid channel axis {axis!r} for rank-{x.ndim} tensor")
    return int(axis) % x.ndim


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("mean and std must be vectors of equal length")
        if np.any(self.std < 0):
            raise ValueError("std must be non-negative")

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.mean, self.std])


def _moments(x: np.ndarray, axis: int):
    # float64 accumulation, population (1/N) convention
    reduce = tuple(i for i in range(x.ndim) if i != axis)
    x64 = x.astype(np.float64, copy=False)
    mean = x64.mean(axis=reduce, keepdims=True)
    std = np.sqrt(((x64 - mean) ** 2).mean(axis=reduce, keepdims=True))
    return mean, std


def channel_stats(x, channel_axis: int = 0) -> ChannelStats:
    """Per-channel mean and population standard deviation.

    Statistics are taken over every position except ``channel_axis``.

    >>> channel_stats(np.array([[1.0, 2.0, 3.0, 4.0]])).std
    array([1.11803399])
    """
    x = as_tensor(x, "x")
    if x.ndim < 2:
        raise ValueError("channel_stats needs a tensor of rank >= 2")
    axis = _axis(x, channel_axis)
    mean, std = _moments(x, axis)
    return ChannelStats(mean.reshape(-1), std.reshape(-1))


def adain(content, style, channel_axis: int = 0, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Re-statisticize ``content`` so each channel takes ``style``'s mean and std.

    Computes ``std_s * (c - mean_c) / (std_c + epsilon) + mean_s`` per channel.
    Only the channel counts of the two tensors need to agree.
    """
    content = as_tensor(content, "content")
    style = as_tensor(style, "style")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if content.ndim < 2 or style.ndim != content.ndim:
        raise ShapeError("content and style must have the same rank >= 2")
    axis = _axis(content, channel_axis)
    if content.shape[axis] != style.shape[axis]:
        raise ShapeError(
            f"channel mismatch: content has {content.shape[axis]}, style has {style.shape[axis]}"
        )
    c_mean, c_std = _moments(content, axis)
    s_mean, s_std = _moments(style, axis)
    out = s_std * (content.astype(np.float64) - c_mean) / (c_std + epsilon) + s_mean
    return out.astype(content.dtype)


# -- HAMT dump format ---------------------------------------------------------

def hamt_bytes(x) -> bytes:
    arr = np.ascontiguousarray(np.asarray(x, dtype="<f4"))
    header = HAMT_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def hamt_from_bytes(buf: bytes) -> np.ndarray:
    if buf[:4] != HAMT_MAGIC:
        raise ValueError("not a HAMT buffer (bad magic)")
    if len(buf) < 8:
        raise ValueError("truncated HAMT header")
    (rank,) = struct.unpack_from("<I", buf, 4)
    offset = 8 + 4 * rank
    if len(buf) < offset:
        raise ValueError("truncated HAMT header")
    shape = struct.unpack_from(f"<{rank}I", buf, 8)
    count = int(np.prod(shape, dtype=np.int64))
    if len(buf) != offset + 4 * count:
        raise ValueError(f"HAMT payload has {len(buf) - offset} bytes, expected {4 * count}")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    return data.reshape(shape).astype(np.float32)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_hamt(path, x) -> None:
    atomic_write_bytes(path, hamt_bytes(x))


def load_hamt(path) -> np.ndarray:
    return hamt_from_bytes(Path(path).read_bytes())
