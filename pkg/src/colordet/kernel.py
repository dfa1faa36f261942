"""Dense NCHW forward operators: convolution, pooling, activation, upsampling.

Tensors are plain float64 ``numpy`` arrays of shape (batch, channels, height,
width). Everything here is forward-only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError



def _pads(padding) -> tuple[int, int, int, int]:
    """Normalize padding to (top, bottom, left, right)."""
    if isinstance(padding, (int, np.integer)):
        p = int(padding)
        pads = (p, p, p, p)
    else:
        pads = tuple(int(p) for p in padding)
        if len(pads) != 4:
            raise InvalidInputError(f"padding must be an int or 4-tuple, got {padding!r}")
    if min(pads) < 0:
        raise InvalidInputError(f"padding must be non-negative, got {padding!r}")
    return pads


def out_size(size: int, kernel: int, stride: int, pad_before: int = 0, pad_after: int = 0) -> int:
    """floor((size + pads - kernel) / stride) + 1; < 1 means the window does not fit."""
    return (size + pad_before + pad_after - kernel) // stride + 1


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    padding: object = 0
    bias: bool = False

    def __post_init__(self):
        if isinstance(self.kernel, int):
            object.__setattr__(self, "kernel", (self.kernel, self.kernel))
        if min(self.kernel) < 1 or self.stride < 1:
            raise InvalidInputError(f"bad conv spec {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidInputError(f"bad conv spec {self}")
        _pads(self.padding)

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, *self.kernel)

    @property
    def num_params(self) -> int:
        kh, kw = self.kernel
        n = kh * kw * self.in_channels * self.out_channels
        return n + (self.out_channels if self.bias else 0)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        top, bottom, left, right = _pads(self.padding)
        kh, kw = self.kernel
        return (
            out_size(h, kh, self.stride, top, bottom),
            out_size(w, kw, self.stride, left, right),
        )


def check_tensor(x: np.ndarray, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise InvalidInputError(f"{name} must be 4-D (N, C, H, W), got shape {x.shape}")
    if min(x.shape) < 1:
        raise InvalidInputError(f"{name} has an empty dimension: {x.shape}")
    return x


def pad2d(x: np.ndarray, padding, value: float = 0.0) -> np.ndarray:
    top, bottom, left, right = _pads(padding)
    if not (top or bottom or left or right):
        return x
    return np.pad(
        x, ((0, 0), (0, 0), (top, bottom), (left, right)), mode="constant", constant_values=value
    )


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, OH, OW, kh, kw) view
    if x.shape[2] < kh or x.shape[3] < kw:
        raise InvalidInputError(
            f"window {kh}x{kw} larger than padded input {x.shape[2]}x{x.shape[3]}"
        )
    v = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return v[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, w: np.ndarray, spec: ConvSpec, b: np.ndarray | None = None) -> np.ndarray:
    """Cross-correlation of ``x`` with weights ``w`` of shape (out, in, kh, kw)."""
    x = check_tensor(x)
    w = np.asarray(w, dtype=np.float64)
    if x.shape[1] != spec.in_channels:
        raise InvalidInputError(
            f"input has {x.shape[1]} channels, conv expects {spec.in_channels}"
        )
    if w.shape != spec.weight_shape:
        raise InvalidInputError(f"weight shape {w.shape} != {spec.weight_shape}")
    kh, kw = spec.kernel
    win = _windows(pad2d(x, spec.padding), kh, kw, spec.stride)
    out = np.einsum("nchwij,ocij->nohw", win, w, optimize=True)
    if spec.bias:
        if b is None or np.shape(b) != (spec.out_channels,):
            raise InvalidInputError("bias flagged but missing or mis-shaped")
        out = out + np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


def max_pool(x: np.ndarray, kernel: int, stride: int, padding=0) -> np.ndarray:
    x = check_tensor(x)
    # -inf padding never wins a max, so padded cells are effectively excluded
    win = _windows(pad2d(x, padding, value=-np.inf), kernel, kernel, stride)
    return win.max(axis=(4, 5))


def avg_pool(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    x = check_tensor(x)
    return _windows(x, kernel, kernel, stride).mean(axis=(4, 5))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidInputError(f"add: shape mismatch {x.shape} vs {y.shape}")
    return x + y


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    x = check_tensor(x)
    if int(factor) != factor or factor < 1:
        raise InvalidInputError(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def init_uniform(shape, rng: np.random.Generator, bound: float = 0.01) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


def save_tensor(x: np.ndarray, path) -> None:
    """Dump as raw little-endian float64 plus a ``.json`` shape sidecar."""
    path = Path(path)
    x = np.ascontiguousarray(x, dtype="<f8")
    path.write_bytes(x.tobytes())
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"shape": list(x.shape), "dtype": "float64", "order": "NCHW"}))


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    shape = tuple(meta["shape"])
    if int(np.prod(shape)) != data.size:
        raise InvalidInputError(f"{path}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape).copy()
