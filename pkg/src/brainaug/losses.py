"""Training-loss math in plain numpy.

Dice, binary and categorical cross-entropy, their combination, the
deep-supervision weighted sum and the polynomial learning-rate schedule, plus
closed-form gradients with respect to the predicted probabilities.

Probabilities are clamped to ``[EPS, 1 - EPS]`` before any logarithm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, EpochOutOfRange, InvalidParameter, LengthMismatch, NotNormalized

EPS = 1e-7
DICE_SMOOTH = 1e-5


def _pair(pred, tgt):
    y_hat = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(tgt, dtype=np.float64).ravel()
    if y_hat.size != y.size:
        raise LengthMismatch(f"prediction has {y_hat.size} values, target has {y.size}")
    if y.size == 0:
        raise EmptyInput("empty prediction/target")
    return y_hat, y


def clamp(probs, eps: float = EPS) -> np.ndarray:
    return np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0 - eps)


def bce(pred, tgt, eps: float = EPS) -> float:
    """Mean binary cross-entropy over all N outputs."""
    y_hat, y = _pair(pred, tgt)
    y_hat = clamp(y_hat, eps)
    return float(-np.mean(y * np.log(y_hat) + (1.0 - y) * np.log1p(-y_hat)))


def ce(pred, tgt, eps: float = EPS, atol: float = 1e-5) -> float:
    """Categorical cross-entropy ``-sum_c y_c log(p_c)``, averaged over rows.

    ``pred`` and ``tgt`` are ``(rows, classes)``; each prediction row must
    sum to 1 within ``atol``.
    """
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    y = np.atleast_2d(np.asarray(tgt, dtype=np.float64))
    if p.shape != y.shape:
        raise LengthMismatch(f"prediction shape {p.shape} != target shape {y.shape}")
    if p.size == 0:
        raise EmptyInput("empty prediction/target")
    sums = p.sum(axis=1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=atol):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise NotNormalized(f"row {worst} sums to {sums[worst]!r}")
    return float(-np.mean(np.sum(y * np.log(clamp(p, eps)), axis=1)))


def dice_loss(pred, tgt, smooth: float = DICE_SMOOTH) -> float:
    """``1 - (2 sum(p*y) + s) / (sum(p) + sum(y) + s)``."""
    y_hat, y = _pair(pred, tgt)
    inter = float(np.dot(y_hat, y))
    denom = float(y_hat.sum() + y.sum()) + smooth
    if denom == 0.0:
        # both empty with no smoothing: perfect agreement on absence
        return 0.0
    return 1.0 - (2.0 * inter + smooth) / denom


def combined_loss(pred, tgt, dice_weight: float = 1.0, bce_weight: float = 1.0,
                  smooth: float = DICE_SMOOTH, eps: float = EPS) -> float:
    """Weighted sum of dice loss and BCE (unit weights by default)."""
    total = 0.0
    if dice_weight:
        total += dice_weight * dice_loss(pred, tgt, smooth)
    if bce_weight:
        total += bce_weight * bce(pred, tgt, eps)
    if not dice_weight and not bce_weight:
        _pair(pred, tgt)
    return total


def deep_supervision_weights(levels: int) -> np.ndarray:
    """``[1, 1/2, 1/4, ...]``, highest resolution first."""
    if levels < 1:
        raise EmptyInput("need at least one resolution level")
    return 0.5 ** np.arange(levels, dtype=np.float64)


def deep_supervision_loss(level_losses) -> float:
    losses = np.asarray(level_losses, dtype=np.float64).ravel()
    if losses.size == 0:
        raise EmptyInput("no level losses given")
    return float(np.dot(deep_supervision_weights(losses.size), losses))


@dataclass(frozen=True)
class LrSchedule:
    lr0: float = 0.01
    epoch_max: int = 300
    exponent: float = 0.9

    def __post_init__(self):
        if not self.lr0 > 0:
            raise InvalidParameter(f"lr0 must be > 0, got {self.lr0}")
        if int(self.epoch_max) != self.epoch_max or self.epoch_max < 1:
            raise InvalidParameter(f"epoch_max must be a positive int, got {self.epoch_max}")

    def __call__(self, epoch: int) -> float:
        return poly_lr(self, epoch)


def poly_lr(sched: LrSchedule, epoch: int) -> float:
    """``lr0 * (1 - epoch / epoch_max) ** exponent``."""
    if not 0 <= epoch <= sched.epoch_max:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {sched.epoch_max}]")
    return sched.lr0 * (1.0 - epoch / sched.epoch_max) ** sched.exponent


def grad_bce(pred, tgt, eps: float = EPS) -> np.ndarray:
    """d BCE / d y_hat_i, evaluated at the clamped prediction."""
    y_hat, y = _pair(pred, tgt)
    y_hat = clamp(y_hat, eps)
    return -(y / y_hat - (1.0 - y) / (1.0 - y_hat)) / y.size


def grad_dice(pred, tgt, smooth: float = DICE_SMOOTH) -> np.ndarray:
    """d dice_loss / d y_hat_i."""
    y_hat, y = _pair(pred, tgt)
    inter = float(np.dot(y_hat, y))
    denom = float(y_hat.sum() + y.sum()) + smooth
    if denom == 0.0:
        return np.zeros_like(y_hat)
    return -(2.0 * y * denom - (2.0 * inter + smooth)) / denom**2


def grad_combined(pred, tgt, dice_weight: float = 1.0, bce_weight: float = 1.0,
                  smooth: float = DICE_SMOOTH, eps: float = EPS) -> np.ndarray:
    return dice_weight * grad_dice(pred, tgt, smooth) + bce_weight * grad_bce(pred, tgt, eps)
