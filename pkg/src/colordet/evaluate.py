"""Per-class detection matching, precision/recall curves and interpolated AP."""
from __future__ import annotations

import csv
import io
import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import iou_matrix
from .dataset import COLOR_NAMES, NUM_CLASSES, AnnotatedImage
from .errors import DataError, InvalidInputError

SCHEMA_VERSION = 1
CONF_THRESH = 0.5
IOU_THRESH = 0.5


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: tuple[float, float, float, float]
    class_id: int
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise InvalidInputError(f"non-finite score {self.score}")
        if not 0 <= self.class_id < NUM_CLASSES:
            raise InvalidInputError(f"class id {self.class_id} out of range")


def _ranked(scores) -> np.ndarray:
    """Indices by descending score; ties keep input order."""
    s = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(s)), -s))


def match_detections(preds: list[Detection], gts: dict, iou_thresh: float = IOU_THRESH) -> np.ndarray:
    """TP (True) / FP (False) per prediction, aligned with ``preds``.

    ``gts`` maps ``(image_id, class_id)`` to an ``(M, 4)`` box array. Within
    each group, predictions are visited by descending score and take the
    unmatched gt with the highest IoU if it reaches ``iou_thresh``.
    """
    flags = np.zeros(len(preds), dtype=bool)
    groups = defaultdict(list)
    for i, p in enumerate(preds):
        groups[(p.image_id, p.class_id)].append(i)
    for key, idx in groups.items():
        gt = np.asarray(gts.get(key, np.zeros((0, 4))), dtype=np.float64).reshape(-1, 4)
        if len(gt) == 0:
            continue
        idx = [idx[k] for k in _ranked([preds[i].score for i in idx])]
        ious = iou_matrix([preds[i].box for i in idx], gt)
        taken = np.zeros(len(gt), dtype=bool)
        for row, i in enumerate(idx):
            cand = np.where(taken, -1.0, ious[row])
            j = int(cand.argmax())
            if cand[j] >= iou_thresh:
                taken[j] = True
                flags[i] = True
    return flags


def pr_curve(flags, scores, n_gt: int) -> list[tuple[float, float]]:
    """(precision, recall) after each prediction in descending-score order."""
    if n_gt < 0:
        raise InvalidInputError("n_gt must be >= 0")
    if n_gt == 0:
        return []
    f = np.asarray(flags, dtype=bool)[_ranked(scores)]
    tp = np.cumsum(f)
    k = np.arange(1, len(f) + 1)
    return list(zip((tp / k).tolist(), (tp / n_gt).tolist()))


def average_precision(curve) -> float | None:
    """All-point interpolated AP; ``None`` when the curve is empty (no gt)."""
    if len(curve) == 0:
        return None
    prec = np.array([p for p, _ in curve], dtype=np.float64)
    rec = np.array([r for _, r in curve], dtype=np.float64)
    # precision envelope: best precision at this or any later (higher-recall) point
    env = np.maximum.accumulate(prec[::-1])[::-1]
    d_rec = np.diff(np.concatenate([[0.0], rec]))
    return float(np.sum(env * d_rec))


def mean_ap(per_class_ap: dict) -> float:
    """Mean over classes whose AP is defined; undefined classes are warned about."""
    defined = {k: v for k, v in per_class_ap.items() if v is not None}
    skipped = sorted(k for k, v in per_class_ap.items() if v is None)
    if not defined:
        raise InvalidInputError("no class has a defined AP")
    if skipped:
        warnings.warn(f"classes without ground truth excluded from mAP: {skipped}", stacklevel=2)
    return float(sum(defined.values()) / len(defined))


@dataclass
class ClassResult:
    class_id: int
    n_gt: int
    n_pred: int
    ap: float | None
    curve: list = field(default_factory=list)


@dataclass
class EvalReport:
    classes: list[ClassResult]
    mAP: float
    iou_thresh: float
    conf_thresh: float
    excluded: list[int]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "iou_thresh": self.iou_thresh,
            "conf_thresh": self.conf_thresh,
            "mAP": self.mAP,
            "excluded_classes": self.excluded,
            "classes": [
                {
                    "class_id": c.class_id,
                    "color": COLOR_NAMES[c.class_id],
                    "n_gt": c.n_gt,
                    "n_pred": c.n_pred,
                    "ap": c.ap,
                    "pr": [[p, r] for p, r in c.curve],
                }
                for c in self.classes
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class_id", "color", "n_gt", "ap"])
        for c in self.classes:
            w.writerow([c.class_id, COLOR_NAMES[c.class_id], c.n_gt,
                        "" if c.ap is None else f"{c.ap:.4f}"])
        w.writerow(["", "mean", sum(c.n_gt for c in self.classes), f"{self.mAP:.4f}"])
        return buf.getvalue()


def evaluate(preds: list[Detection], images: list[AnnotatedImage],
             iou_thresh: float = IOU_THRESH, conf_thresh: float = CONF_THRESH) -> EvalReport:
    gts = defaultdict(list)
    n_gt = np.zeros(NUM_CLASSES, dtype=int)
    for im in images:
        for obj in im.objects:
            gts[(im.path, obj.class_id)].append(obj.box)
            n_gt[obj.class_id] += 1
    kept = [p for p in preds if p.score >= conf_thresh]
    flags = match_detections(kept, gts, iou_thresh)
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for c in range(NUM_CLASSES):
            sel = [i for i, p in enumerate(kept) if p.class_id == c]
            curve = pr_curve(flags[sel], [kept[i].score for i in sel], int(n_gt[c]))
            ap = average_precision(curve)
            if ap is None and n_gt[c] > 0:
                ap = 0.0  # gt exists but nothing was predicted
            results.append(ClassResult(c, int(n_gt[c]), len(sel), ap, curve))
    per_class = {r.class_id: r.ap for r in results}
    excluded = [c for c, v in per_class.items() if v is None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = mean_ap(per_class)
    return EvalReport(results, m, iou_thresh, conf_thresh, excluded)


def load_predictions(path) -> list[Detection]:
    """JSONL, one detection per line: ``{"image", "bbox", "color", "score"}``."""
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(
                    Detection(
                        image_id=str(rec["image"]),
                        box=tuple(float(v) for v in rec["bbox"]),
                        class_id=int(rec["color"]),
                        score=float(rec["score"]),
                    )
                )
            except (ValueError, KeyError, TypeError, InvalidInputError) as e:
                raise DataError(f"bad prediction record: {e}", path, lineno) from None
    return out


def write_predictions(preds, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in preds:
            fh.write(json.dumps({"image": p.image_id, "bbox": list(p.box),
                                 "color": p.class_id, "score": p.score}) + "\n")
