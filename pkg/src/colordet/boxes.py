"""Anchors, IoU, delta encoding, NMS and foreground/background assignment.

Boxes are ``(N, 4)`` float arrays in ``[x1, y1, x2, y2]`` pixel corners.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# decode never lets a log-size delta scale a box by more than 1000/16
MAX_LOG_RATIO = math.log(1000.0 / 16)

FG, BG, IGNORE = 1, 0, -1


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple[float, ...] = (64.0, 128.0, 256.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    stride: int = 16

    def __post_init__(self):
        if not self.scales or not self.ratios or self.stride < 1:
            raise InvalidInputError(f"bad anchor config {self}")


def as_boxes(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64)
    if b.ndim == 1:
        b = b.reshape(1, 4) if b.size == 4 else b.reshape(0, 4)
    if b.ndim != 2 or b.shape[1] != 4:
        raise InvalidInputError(f"boxes must have shape (N, 4), got {b.shape}")
    return b


def base_anchors(scales, ratios) -> np.ndarray:
    """Anchors centred on the origin; area ``s**2`` and ``h / w == ratio``."""
    out = []
    for s in scales:
        for r in ratios:
            w = s / math.sqrt(r)
            h = s * math.sqrt(r)
            out.append([-w / 2, -h / 2, w / 2, h / 2])
    return np.array(out, dtype=np.float64).reshape(-1, 4)


def gen_anchors(feature_h: int, feature_w: int, cfg: AnchorConfig = AnchorConfig()) -> np.ndarray:
    """Ordered by cell (row-major), then scale, then ratio."""
    if feature_h < 1 or feature_w < 1:
        raise InvalidInputError("feature map dims must be >= 1")
    base = base_anchors(cfg.scales, cfg.ratios)
    cy = (np.arange(feature_h) + 0.5) * cfg.stride
    cx = (np.arange(feature_w) + 0.5) * cfg.stride
    yy, xx = np.meshgrid(cy, cx, indexing="ij")
    shifts = np.stack([xx.ravel(), yy.ravel(), xx.ravel(), yy.ravel()], axis=1)
    return (shifts[:, None, :] + base[None, :, :]).reshape(-1, 4)


def area(b: np.ndarray) -> np.ndarray:
    b = as_boxes(b)
    return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])


def iou_matrix(a, b) -> np.ndarray:
    a, b = as_boxes(a), as_boxes(b)
    ix1 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix2 - ix1, 0, None) * np.clip(iy2 - iy1, 0, None)
    union = area(a)[:, None] + area(b)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def iou(a, b) -> float:
    return float(iou_matrix(a, b)[0, 0])


def encode(boxes, anchors) -> np.ndarray:
    """Deltas ``(dx, dy, dw, dh)`` taking each anchor onto its box."""
    b, a = as_boxes(boxes), as_boxes(anchors)
    wa, ha = a[:, 2] - a[:, 0], a[:, 3] - a[:, 1]
    cxa, cya = a[:, 0] + 0.5 * wa, a[:, 1] + 0.5 * ha
    w, h = b[:, 2] - b[:, 0], b[:, 3] - b[:, 1]
    cx, cy = b[:, 0] + 0.5 * w, b[:, 1] + 0.5 * h
    return np.stack([(cx - cxa) / wa, (cy - cya) / ha, np.log(w / wa), np.log(h / ha)], axis=1)


def decode(deltas, anchors, image_size: tuple[int, int] | None = None) -> np.ndarray:
    """Inverse of :func:`encode`. ``image_size`` is (height, width) for clipping."""
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    a = as_boxes(anchors)
    wa, ha = a[:, 2] - a[:, 0], a[:, 3] - a[:, 1]
    cxa, cya = a[:, 0] + 0.5 * wa, a[:, 1] + 0.5 * ha
    dw = np.minimum(d[:, 2], MAX_LOG_RATIO)
    dh = np.minimum(d[:, 3], MAX_LOG_RATIO)
    cx = d[:, 0] * wa + cxa
    cy = d[:, 1] * ha + cya
    w = np.exp(dw) * wa
    h = np.exp(dh) * ha
    out = np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)
    if image_size is not None:
        img_h, img_w = image_size
        out[:, [0, 2]] = np.clip(out[:, [0, 2]], 0, img_w)
        out[:, [1, 3]] = np.clip(out[:, [1, 3]], 0, img_h)
    return out


def nms(boxes, scores, iou_thresh: float = 0.5) -> list[int]:
    """Greedy NMS. Equal scores resolve to the lower index first."""
    b = as_boxes(boxes)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(s) != len(b):
        raise InvalidInputError(f"{len(b)} boxes but {len(s)} scores")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("scores must be finite")
    if not 0.0 <= iou_thresh <= 1.0:
        raise InvalidInputError(f"iou_thresh must be in [0, 1], got {iou_thresh}")
    order = np.lexsort((np.arange(len(s)), -s))
    overlaps = iou_matrix(b, b)
    alive = np.ones(len(b), dtype=bool)
    keep = []
    for i in order:
        if not alive[i]:
            continue
        keep.append(int(i))
        alive &= ~(overlaps[i] > iou_thresh)
    return keep


def assign_labels(anchors, gt, lo: float = 0.3, hi: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor label (FG=1, BG=0, IGNORE=-1) and matched gt index (-1 if none).

    Besides the threshold rule, every gt box claims its best-overlapping
    anchors (ties included) as foreground, as long as that overlap is > 0.
    """
    if not 0.0 <= lo <= hi <= 1.0:
        raise InvalidInputError(f"need 0 <= lo <= hi <= 1, got lo={lo}, hi={hi}")
    a, g = as_boxes(anchors), as_boxes(gt)
    n = len(a)
    if len(g) == 0:
        return np.full(n, BG, dtype=np.int64), np.full(n, -1, dtype=np.int64)
    ious = iou_matrix(a, g)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(n), best_gt]
    labels = np.full(n, IGNORE, dtype=np.int64)
    labels[best_iou < lo] = BG
    labels[best_iou >= hi] = FG
    matched = np.where(labels == FG, best_gt, -1)
    gt_best = ious.max(axis=0)
    for j in range(len(g)):
        if gt_best[j] <= 0:
            continue
        for i in np.flatnonzero(ious[:, j] == gt_best[j]):
            labels[i] = FG
            # keep an existing threshold match; otherwise point at this gt
            if matched[i] < 0:
                matched[i] = j
    return labels, matched
