"""Regression and classification losses with analytic gradients.

``vcr_loss`` is Smooth-L1 with a configurable knee ``beta`` (default 0.11):
quadratic ``0.5 * d**2 / beta`` for ``|d| < beta``, linear ``|d| - beta / 2``
beyond it, where ``d = target - pred``. All ``*_grad`` functions return
d(loss)/d(pred) with the same reduction applied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

VCR_BETA = 0.11
KINDS = ("vcr", "smooth_l1", "l1", "mse", "ce", "focal")


def _pair(pred, target):
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise InvalidInputError(f"length mismatch: pred {p.size}, target {t.size}")
    if p.size == 0:
        raise InvalidInputError("empty input")
    return p, t


def _reduce(values: np.ndarray, reduction: str) -> float:
    if reduction == "mean":
        return float(values.mean())
    if reduction == "sum":
        return float(values.sum())
    raise InvalidInputError(f"unknown reduction {reduction!r}")


def _grad_scale(n: int, reduction: str) -> float:
    if reduction not in ("mean", "sum"):
        raise InvalidInputError(f"unknown reduction {reduction!r}")
    return 1.0 / n if reduction == "mean" else 1.0


def _check_beta(beta):
    if not beta > 0:
        raise InvalidInputError(f"beta must be > 0, got {beta}")


def vcr_elementwise(d: np.ndarray, beta: float) -> np.ndarray:
    ad = np.abs(d)
    return np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)


def vcr_loss(pred, target, beta: float = VCR_BETA, reduction: str = "mean") -> float:
    _check_beta(beta)
    p, t = _pair(pred, target)
    return _reduce(vcr_elementwise(t - p, beta), reduction)


def vcr_loss_grad(pred, target, beta: float = VCR_BETA, reduction: str = "mean") -> np.ndarray:
    _check_beta(beta)
    p, t = _pair(pred, target)
    d = t - p
    # |d| == beta takes the linear branch; both branches give -sign(d) there
    g = np.where(np.abs(d) < beta, -d / beta, -np.sign(d))
    return g * _grad_scale(p.size, reduction) + 0.0  # no -0.0 in reports


def smooth_l1_loss(pred, target, beta: float = 1.0, reduction: str = "mean") -> float:
    return vcr_loss(pred, target, beta, reduction)


def smooth_l1_loss_grad(pred, target, beta: float = 1.0, reduction: str = "mean") -> np.ndarray:
    return vcr_loss_grad(pred, target, beta, reduction)


def l1_loss(pred, target, reduction: str = "mean") -> float:
    p, t = _pair(pred, target)
    return _reduce(np.abs(t - p), reduction)


def l1_loss_grad(pred, target, reduction: str = "mean") -> np.ndarray:
    p, t = _pair(pred, target)
    return np.sign(p - t) * _grad_scale(p.size, reduction)


def mse_loss(pred, target, reduction: str = "mean") -> float:
    p, t = _pair(pred, target)
    return _reduce((t - p) ** 2, reduction)


def mse_loss_grad(pred, target, reduction: str = "mean") -> np.ndarray:
    p, t = _pair(pred, target)
    return 2.0 * (p - t) * _grad_scale(p.size, reduction)


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _probs(probs, target):
    """Return (P as (N, K), target indices (N,), p_t (N,), squeeze flag)."""
    p = np.asarray(probs, dtype=np.float64)
    single = p.ndim == 1
    p2 = p.reshape(1, -1) if single else p
    if p2.ndim != 2 or p2.shape[1] == 0:
        raise InvalidInputError(f"probabilities must be (K,) or (N, K), got {p.shape}")
    tgt = np.atleast_1d(np.asarray(target))
    if tgt.shape != (p2.shape[0],) or not np.issubdtype(tgt.dtype, np.integer):
        raise InvalidInputError("target must hold one integer class index per row")
    if np.any(tgt < 0) or np.any(tgt >= p2.shape[1]):
        raise InvalidInputError("target class index out of range")
    if np.any(p2 < 0) or np.any(p2 > 1):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    pt = p2[np.arange(len(tgt)), tgt]
    if np.any(pt <= 0):
        raise InvalidInputError("target-class probability must be in (0, 1]")
    return p2, tgt, pt, single


def ce_loss(probs, target, reduction: str = "mean") -> float:
    _, _, pt, _ = _probs(probs, target)
    return _reduce(-np.log(pt), reduction)


def ce_loss_grad(probs, target, reduction: str = "mean") -> np.ndarray:
    p2, tgt, pt, single = _probs(probs, target)
    g = np.zeros_like(p2)
    g[np.arange(len(tgt)), tgt] = -1.0 / pt
    g *= _grad_scale(len(tgt), reduction)
    return g[0] if single else g


def focal_loss(probs, target, gamma: float = 2.0, alpha: float = 0.25,
               reduction: str = "mean") -> float:
    _check_focal(gamma, alpha)
    _, _, pt, _ = _probs(probs, target)
    return _reduce(-alpha * (1.0 - pt) ** gamma * np.log(pt), reduction)


def focal_loss_grad(probs, target, gamma: float = 2.0, alpha: float = 0.25,
                    reduction: str = "mean") -> np.ndarray:
    _check_focal(gamma, alpha)
    p2, tgt, pt, single = _probs(probs, target)
    q = 1.0 - pt
    logp = np.log(pt)
    # d/dp [-a (1-p)^g ln p] = a [g (1-p)^(g-1) ln p - (1-p)^g / p]
    # at p == 1 the first term is 0 * (finite or inf) and is taken as 0
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(q > 0, gamma * q ** (gamma - 1.0) * logp, 0.0)
    d = alpha * (first - q ** gamma / pt)
    g = np.zeros_like(p2)
    g[np.arange(len(tgt)), tgt] = d
    g *= _grad_scale(len(tgt), reduction)
    return g[0] if single else g


def _check_focal(gamma, alpha):
    if gamma < 0:
        raise InvalidInputError(f"gamma must be >= 0, got {gamma}")
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"alpha must be in (0, 1], got {alpha}")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "vcr"
    beta: float | None = None
    gamma: float = 2.0
    alpha_bal: float = 0.25
    reduction: str = "mean"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown loss kind {self.kind!r}; choose from {KINDS}")
        if self.beta is not None:
            _check_beta(self.beta)

    @property
    def effective_beta(self) -> float:
        if self.beta is not None:
            return self.beta
        return VCR_BETA if self.kind == "vcr" else 1.0


def baseline_loss(cfg: LossConfig, pred, target) -> float:
    k, r = cfg.kind, cfg.reduction
    if k in ("vcr", "smooth_l1"):
        return vcr_loss(pred, target, cfg.effective_beta, r)
    if k == "l1":
        return l1_loss(pred, target, r)
    if k == "mse":
        return mse_loss(pred, target, r)
    if k == "ce":
        return ce_loss(pred, target, r)
    return focal_loss(pred, target, cfg.gamma, cfg.alpha_bal, r)


def baseline_loss_grad(cfg: LossConfig, pred, target) -> np.ndarray:
    k, r = cfg.kind, cfg.reduction
    if k in ("vcr", "smooth_l1"):
        return vcr_loss_grad(pred, target, cfg.effective_beta, r)
    if k == "l1":
        return l1_loss_grad(pred, target, r)
    if k == "mse":
        return mse_loss_grad(pred, target, r)
    if k == "ce":
        return ce_loss_grad(pred, target, r)
    return focal_loss_grad(pred, target, cfg.gamma, cfg.alpha_bal, r)
