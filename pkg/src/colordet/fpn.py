"""Top-down feature pyramid over backbone stages C2..C5."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernel as K
from .backbone import StageOutputs
from .errors import InvalidInputError
from .kernel import ConvSpec

DEFAULT_CHANNELS = 256
DEFAULT_NORM_SCALE = 20.0
EPS = 1e-12


@dataclass
class Pyramid:
    P2: np.ndarray
    P3: np.ndarray
    P4: np.ndarray
    P5: np.ndarray

    def levels(self) -> dict[str, np.ndarray]:
        return {"P2": self.P2, "P3": self.P3, "P4": self.P4, "P5": self.P5}


def l2_normalize(x: np.ndarray, scale: float = 1.0, eps: float = EPS) -> np.ndarray:
    """Scale every spatial location's channel vector to L2 norm ``scale``."""
    if scale <= 0:
        raise InvalidInputError(f"scale must be > 0, got {scale}")
    x = K.check_tensor(x)
    norm = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    return x / np.maximum(norm, eps) * scale


def lateral(c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """1×1 projection of ``c`` to ``w.shape[0]`` channels."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 2:
        w = w[:, :, None, None]
    spec = ConvSpec(w.shape[1], w.shape[0], (1, 1))
    if c.shape[1] != spec.in_channels:
        raise InvalidInputError(f"lateral expects {spec.in_channels} channels, got {c.shape[1]}")
    return K.conv2d(c, w, spec)


def top_down_merge(upper: np.ndarray, lateral_out: np.ndarray) -> np.ndarray:
    upper = K.check_tensor(upper, "upper")
    lateral_out = K.check_tensor(lateral_out, "lateral_out")
    n, c, h, w = upper.shape
    if lateral_out.shape != (n, c, 2 * h, 2 * w):
        raise InvalidInputError(
            f"cannot merge {upper.shape} into {lateral_out.shape}: need equal channels "
            "and exactly double spatial size"
        )
    return K.add(K.upsample_nearest(upper, 2), lateral_out)


def smooth(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    spec = ConvSpec(w.shape[1], w.shape[0], (3, 3), 1, 1)
    return K.conv2d(x, w, spec)


def init_fpn_weights(in_channels=(256, 512, 1024, 2048), d: int = DEFAULT_CHANNELS,
                     seed: int = 0, bound: float = 0.01) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    weights = {}
    for level, c in zip((2, 3, 4, 5), in_channels):
        weights[f"lateral{level}"] = K.init_uniform((d, c, 1, 1), rng, bound)
        weights[f"smooth{level}"] = K.init_uniform((d, d, 3, 3), rng, bound)
    return weights


def build_pyramid(stages: StageOutputs, weights: dict, d: int = DEFAULT_CHANNELS,
                  scale: float = DEFAULT_NORM_SCALE) -> Pyramid:
    cs = stages.as_list()
    for lower, upper in zip(cs, cs[1:]):
        if lower.shape[2] != 2 * upper.shape[2] or lower.shape[3] != 2 * upper.shape[3]:
            raise InvalidInputError(
                f"stage maps must halve: {lower.shape[2:]} -> {upper.shape[2:]}"
            )
    lat = {
        level: lateral(l2_normalize(c, scale), weights[f"lateral{level}"])
        for level, c in zip((2, 3, 4, 5), cs)
    }
    for level, t in lat.items():
        if t.shape[1] != d:
            raise InvalidInputError(f"lateral{level} yields {t.shape[1]} channels, expected {d}")
    out = {5: smooth(lat[5], weights["smooth5"])}
    for level in (4, 3, 2):
        out[level] = smooth(top_down_merge(out[level + 1], lat[level]), weights[f"smooth{level}"])
    return Pyramid(out[2], out[3], out[4], out[5])
