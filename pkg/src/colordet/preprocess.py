"""Dark-channel dehazing and linear illumination adjustment.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1]; 8-bit
conversion happens only in :func:`load_image` / :func:`save_image`.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image as PILImage

from .errors import InvalidInputError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
A_FLOOR = 1.0 / 255


@dataclass(frozen=True)
class DehazeParams:
    window: int = 15
    omega: float = 0.95
    t0: float = 0.1
    top_fraction: float = 0.001

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise InvalidInputError(f"window must be a positive odd integer, got {self.window}")
        if not 0 <= self.omega <= 1:
            raise InvalidInputError(f"omega must be in [0, 1], got {self.omega}")
        if not 0 < self.t0 < 1:
            raise InvalidInputError(f"t0 must be in (0, 1), got {self.t0}")
        if not 0 < self.top_fraction <= 1:
            raise InvalidInputError(f"top_fraction must be in (0, 1], got {self.top_fraction}")


@dataclass(frozen=True)
class IllumParams:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")


NIGHT = IllumParams(1.5, 0.0)
NOON = IllumParams(0.8, -10.0)
ILLUM_PRESETS = {"night": NIGHT, "noon": NOON}


def parse_illum(text: str) -> IllumParams:
    """``night``, ``noon`` or ``custom:ALPHA,BETA``."""
    if text in ILLUM_PRESETS:
        return ILLUM_PRESETS[text]
    if text.startswith("custom:"):
        try:
            a, b = (float(v) for v in text[len("custom:"):].split(","))
        except ValueError:
            raise InvalidInputError(f"bad custom illumination {text!r}; want custom:A,B") from None
        return IllumParams(a, b)
    raise InvalidInputError(f"unknown illumination preset {text!r}")


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"image must be (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError("image has zero size")
    return img


def _min_filter(m: np.ndarray, window: int) -> np.ndarray:
    """Window minimum with the window clipped at the borders."""
    if window < 1 or window % 2 == 0:
        raise InvalidInputError(f"window must be a positive odd integer, got {window}")
    r = window // 2
    if r == 0:
        return m.copy()
    padded = np.pad(m, r, mode="constant", constant_values=np.inf)
    rows = sliding_window_view(padded, window, axis=0).min(axis=-1)
    return sliding_window_view(rows, window, axis=1).min(axis=-1)


def dark_channel(img, window: int = 15) -> np.ndarray:
    img = check_image(img)
    return _min_filter(img.min(axis=2), window)


def estimate_atmosphere(img, dark, top_fraction: float = 0.001) -> np.ndarray:
    """Mean colour of the pixels with the highest dark-channel values."""
    img = check_image(img)
    dark = np.asarray(dark, dtype=np.float64)
    if dark.shape != img.shape[:2]:
        raise InvalidInputError(f"dark map {dark.shape} does not match image {img.shape[:2]}")
    if not 0 < top_fraction <= 1:
        raise InvalidInputError(f"top_fraction must be in (0, 1], got {top_fraction}")
    n = max(1, int(dark.size * top_fraction))
    idx = np.argsort(-dark.ravel(), kind="stable")[:n]
    A = img.reshape(-1, 3)[idx].mean(axis=0)
    return np.clip(A, A_FLOOR, 1.0)


def estimate_transmission(img, A, window: int = 15, omega: float = 0.95) -> np.ndarray:
    img = check_image(img)
    A = np.asarray(A, dtype=np.float64).reshape(3)
    if np.any(A <= 0):
        raise InvalidInputError(f"atmospheric light must be positive, got {A}")
    normalized = (img / A).min(axis=2)
    return np.clip(1.0 - omega * _min_filter(normalized, window), 0.0, 1.0)


def recover(img, A, t, t0: float = 0.1) -> np.ndarray:
    img = check_image(img)
    A = np.asarray(A, dtype=np.float64).reshape(3)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != img.shape[:2]:
        raise InvalidInputError(f"transmission {t.shape} does not match image {img.shape[:2]}")
    if not 0 < t0 < 1:
        raise InvalidInputError(f"t0 must be in (0, 1), got {t0}")
    tt = np.maximum(t, t0)[:, :, None]
    J = (img - A) / tt + A
    # (I - A) + A is not exact in floating point; t == 1 must return I as-is
    J = np.where(tt == 1.0, img, J)
    return np.clip(J, 0.0, 1.0)


def dehaze(img, params: DehazeParams = DehazeParams()) -> np.ndarray:
    img = check_image(img)
    dark = dark_channel(img, params.window)
    A = estimate_atmosphere(img, dark, params.top_fraction)
    t = estimate_transmission(img, A, params.window, params.omega)
    return recover(img, A, t, params.t0)


def illum_adjust(img, params: IllumParams) -> np.ndarray:
    """``alpha * value + beta`` per channel in 8-bit units, clamped to [0, 255]."""
    img = check_image(img)
    if params.alpha == 1.0 and params.beta == 0.0:
        return img.copy()
    val = params.alpha * (img * 255.0) + params.beta
    return np.clip(val, 0.0, 255.0) / 255.0


def to_uint8(img) -> np.ndarray:
    # round half up, so x.5 always goes to the next level
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def load_image(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return check_image(from_uint8(np.asarray(im.convert("RGB"))))


def save_image(img, path) -> None:
    PILImage.fromarray(to_uint8(check_image(img)), mode="RGB").save(path)


def process_image(img, dehaze_params: DehazeParams | None = None,
                  illum: IllumParams | None = None, order: str = "dehaze-first") -> np.ndarray:
    steps = []
    if dehaze_params is not None:
        steps.append(lambda x: dehaze(x, dehaze_params))
    if illum is not None:
        steps.append(lambda x: illum_adjust(x, illum))
    if order == "illum-first":
        steps.reverse()
    elif order != "dehaze-first":
        raise InvalidInputError(f"unknown order {order!r}")
    out = check_image(img)
    for step in steps:
        out = step(out)
    return out


def list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise InvalidInputError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _process_file(job):
    src, dst, dehaze_params, illum, order = job
    save_image(process_image(load_image(src), dehaze_params, illum, order), dst)
    return str(dst)


def process_dir(in_dir, out_dir, dehaze_params=None, illum=None, order="dehaze-first",
                jobs: int = 1) -> list[str]:
    """Process every PNG/JPEG in ``in_dir``; results come back in sorted input order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(p, out_dir / p.name, dehaze_params, illum, order) for p in list_images(in_dir)]
    if jobs > 1 and len(work) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_process_file, work))
    return [_process_file(w) for w in work]
