"""JSONL annotations, class statistics and stratified splitting.

One JSON object per line::

    {"image": "a.jpg", "width": 1920, "height": 1080,
     "objects": [{"bbox": [x1, y1, x2, y2], "color": 0}]}
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidInputError

COLOR_NAMES = (
    "white", "black", "orange", "silver-gray", "grass-green", "dark-gray",
    "dark-red", "gray", "red", "cyan", "champagne", "dark-blue", "blue",
    "dark-brown", "brown", "yellow", "lemon-yellow", "dark-orange",
    "dark-green", "orange-red", "earth-yellow", "green", "pink", "purple",
)
NUM_CLASSES = len(COLOR_NAMES)
COLOR_IDS = {name: i for i, name in enumerate(COLOR_NAMES)}

# Published per-colour vehicle counts and percentages, in class-id order.
TABLE2_COUNTS = (
    11827, 6270, 2431, 2125, 1766, 1555, 1263, 736, 644, 553, 466, 365,
    316, 230, 118, 100, 92, 90, 70, 63, 52, 50, 35, 15,
)
TABLE2_PERCENT = (
    37.87, 20.08, 7.78, 6.80, 5.65, 4.98, 4.04, 2.36, 2.06, 1.77, 1.49, 1.17,
    1.01, 0.74, 0.38, 0.32, 0.29, 0.29, 0.22, 0.20, 0.17, 0.16, 0.11, 0.04,
)
TABLE2_TOTAL = 31232
TABLE2_IMAGES = 10091
SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class Object:
    box: tuple[float, float, float, float]
    class_id: int


@dataclass
class AnnotatedImage:
    path: str
    width: int
    height: int
    objects: list[Object] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "image": self.path,
            "width": self.width,
            "height": self.height,
            "objects": [{"bbox": list(o.box), "color": o.class_id} for o in self.objects],
        }

    def class_counts(self) -> np.ndarray:
        return np.bincount([o.class_id for o in self.objects], minlength=NUM_CLASSES)


def parse_record(rec) -> AnnotatedImage:
    if not isinstance(rec, dict):
        raise InvalidInputError("record must be a JSON object")
    try:
        path = rec["image"]
        width, height = rec["width"], rec["height"]
        raw_objects = rec.get("objects", [])
    except KeyError as e:
        raise InvalidInputError(f"missing field {e}") from None
    if not isinstance(path, str):
        raise InvalidInputError("image must be a string")
    if not (isinstance(width, int) and isinstance(height, int)) or width < 1 or height < 1:
        raise InvalidInputError(f"bad image size {width}x{height}")
    objects = []
    for k, o in enumerate(raw_objects):
        try:
            bbox, color = o["bbox"], o["color"]
        except (KeyError, TypeError):
            raise InvalidInputError(f"object {k} needs 'bbox' and 'color'") from None
        if not isinstance(color, int) or isinstance(color, bool) or not 0 <= color < NUM_CLASSES:
            raise InvalidInputError(f"object {k}: class {color!r} out of range 0..{NUM_CLASSES - 1}")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise InvalidInputError(f"object {k}: bbox must be [x1, y1, x2, y2]")
        x1, y1, x2, y2 = (float(v) for v in bbox)
        if not (x2 > x1 and y2 > y1):
            raise InvalidInputError(f"object {k}: inverted box {bbox}")
        if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
            raise InvalidInputError(f"object {k}: box {bbox} outside {width}x{height} image")
        objects.append(Object((x1, y1, x2, y2), color))
    return AnnotatedImage(path, width, height, objects)


def load_annotations(path) -> list[AnnotatedImage]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_record(json.loads(line)))
            except json.JSONDecodeError as e:
                raise DataError(f"malformed JSON: {e.msg}", path, lineno) from None
            except InvalidInputError as e:
                raise DataError(str(e), path, lineno) from None
    return out


def write_annotations(images, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for im in images:
            fh.write(json.dumps(im.to_json(), ensure_ascii=False) + "\n")


@dataclass
class ClassStats:
    counts: list[int]
    proportions: list[float]
    total: int
    imbalance: float

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "imbalance_ratio": self.imbalance,
            "classes": [
                {"class_id": i, "color": COLOR_NAMES[i], "count": c, "proportion": p}
                for i, (c, p) in enumerate(zip(self.counts, self.proportions))
            ],
        }


def class_stats(images) -> ClassStats:
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    for im in images:
        counts += im.class_counts()
    total = int(counts.sum())
    props = (counts / total).tolist() if total else [0.0] * NUM_CLASSES
    nonzero = counts[counts > 0]
    imbalance = float(nonzero.max() / nonzero.min()) if len(nonzero) else 0.0
    return ClassStats([int(c) for c in counts], props, total, imbalance)


def table2_check(stats: ClassStats, tol_percent: float = 0.005) -> list[dict]:
    """Compare counts and percentages with the published per-colour table."""
    rows = []
    for i in range(NUM_CLASSES):
        pct = 100.0 * stats.proportions[i]
        rows.append({
            "class_id": i,
            "color": COLOR_NAMES[i],
            "count": stats.counts[i],
            "ref_count": TABLE2_COUNTS[i],
            "percent": pct,
            "ref_percent": TABLE2_PERCENT[i],
            "count_ok": stats.counts[i] == TABLE2_COUNTS[i],
            "percent_ok": abs(pct - TABLE2_PERCENT[i]) <= tol_percent,
        })
    return rows


def synthetic_table2(n_images: int = TABLE2_IMAGES, seed: int = 0,
                     counts=TABLE2_COUNTS, width: int = 1920, height: int = 1080) -> list[AnnotatedImage]:
    """Multi-object images whose per-class object counts equal ``counts`` exactly."""
    rng = random.Random(seed)
    labels = [c for c, n in enumerate(counts) for _ in range(n)]
    rng.shuffle(labels)
    total = len(labels)
    if not 1 <= n_images <= total:
        raise InvalidInputError(f"need 1 <= n_images <= {total}")
    cuts = sorted(rng.sample(range(1, total), n_images - 1))
    bounds = [0, *cuts, total]
    images = []
    for i in range(n_images):
        chunk = labels[bounds[i]:bounds[i + 1]]
        cols = math.ceil(math.sqrt(len(chunk)))
        rows = math.ceil(len(chunk) / cols)
        cw, ch = width / cols, height / rows
        objs = []
        for k, c in enumerate(chunk):
            r, q = divmod(k, cols)
            x1, y1 = q * cw + 0.1 * cw, r * ch + 0.1 * ch
            objs.append(Object((round(x1, 2), round(y1, 2), round(x1 + 0.8 * cw, 2),
                                round(y1 + 0.8 * ch, 2)), c))
        images.append(AnnotatedImage(f"img_{i:05d}.jpg", width, height, objs))
    return images


def _canonical_key(im: AnnotatedImage):
    return (im.path, json.dumps(im.to_json(), sort_keys=True))


def stratified_split(images, ratios=(8, 1, 1), seed: int = 0, refine: bool = True):
    """Partition images so each class's objects follow ``ratios`` as closely as possible.

    Classes are handled rarest first; each image carrying the current class
    goes to the split where it most reduces the squared deviation from the
    per-class targets. A local-search pass then moves single images between
    splits while that keeps lowering the deviation. Deterministic in ``seed``
    and independent of input order.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.ndim != 1 or len(ratios) < 1 or np.any(ratios <= 0):
        raise InvalidInputError(f"ratios must be positive, got {ratios.tolist()}")
    frac = ratios / ratios.sum()
    n_splits = len(frac)

    pool = sorted(images, key=_canonical_key)
    random.Random(seed).shuffle(pool)
    counts = np.array([im.class_counts() for im in pool], dtype=np.float64).reshape(-1, NUM_CLASSES)
    totals = counts.sum(axis=0)
    desired = frac[:, None] * totals[None, :]
    assigned = np.zeros_like(desired)
    where = np.full(len(pool), -1, dtype=np.int64)

    def cost_delta(i, s):
        k = counts[i]
        dev = assigned[s] - desired[s]
        return float(np.sum((dev + k) ** 2 - dev ** 2))

    def place(i, s):
        where[i] = s
        assigned[s] += counts[i]

    remaining = totals.copy()
    while True:
        live = np.flatnonzero(remaining > 0)
        if len(live) == 0:
            break
        c = live[np.argmin(remaining[live])]
        for i in np.flatnonzero((counts[:, c] > 0) & (where < 0)):
            s = min(range(n_splits), key=lambda s: (cost_delta(i, s), -(desired[s] - assigned[s]).sum(), s))
            place(i, s)
            remaining -= counts[i]

    # images without objects are spread by image count
    empty = np.flatnonzero(where < 0)
    if len(empty):
        n_img = np.bincount(where[where >= 0], minlength=n_splits).astype(float)
        for i in empty:
            s = int(np.argmax(frac * len(pool) - n_img))
            where[i] = s
            n_img[s] += 1

    if refine:
        for _ in range(100):
            improved = False
            for i in range(len(pool)):
                if not counts[i].any():
                    continue
                s = where[i]
                k = counts[i]
                for t in range(n_splits):
                    if t == s:
                        continue
                    ds = assigned[s] - desired[s]
                    dt = assigned[t] - desired[t]
                    delta = np.sum((ds - k) ** 2 - ds ** 2 + (dt + k) ** 2 - dt ** 2)
                    if delta < -1e-9:
                        assigned[s] -= k
                        assigned[t] += k
                        where[i] = t
                        s = t
                        improved = True
            if not improved:
                break

    return tuple([pool[i] for i in range(len(pool)) if where[i] == s] for s in range(n_splits))


def split_report(splits, ratios=(8, 1, 1)) -> dict:
    ratios = np.asarray(ratios, dtype=np.float64)
    frac = ratios / ratios.sum()
    per_split = [class_stats(s).counts for s in splits]
    totals = np.sum(per_split, axis=0)
    classes = []
    worst = 0.0
    for c in range(NUM_CLASSES):
        devs = [per_split[s][c] - frac[s] * totals[c] for s in range(len(splits))]
        worst = max(worst, *(abs(d) for d in devs))
        classes.append({
            "class_id": c,
            "color": COLOR_NAMES[c],
            "total": int(totals[c]),
            "counts": [int(per_split[s][c]) for s in range(len(splits))],
            "deviation": [float(d) for d in devs],
        })
    return {
        "images": [len(s) for s in splits],
        "max_abs_deviation": float(worst),
        "classes": classes,
    }
