"""Self-check of the loss and schedule math, used by ``brainaug verify-math``.

Expected values were evaluated independently at 50 significant digits
(mpmath) and are frozen here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses

POLY_LR_HALFWAY = 0.0053588673126814658  # 0.01 * 0.5 ** 0.9
LN2 = 0.69314718055994530942
BCE_09_01 = 0.10536051565782630123  # -ln 0.9


@dataclass
class Check:
    name: str
    expected: float
    got: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(abs(self.got - self.expected) <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: expected={self.expected!r} got={self.got!r} tol={self.tol:g}"


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / ||b||`` in the 2-norm."""
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else float(np.linalg.norm(a))


def _random_instances(rng, count):
    # probabilities kept in [0.1, 0.9] so the O(h^2) truncation error of the
    # central difference stays well below the tolerance
    for _ in range(count):
        n = int(rng.integers(1, 33))
        yield rng.uniform(0.1, 0.9, n), rng.integers(0, 2, n).astype(np.float64)


def gradient_error(grad, loss, instances) -> float:
    worst = 0.0
    for y_hat, y in instances:
        analytic = grad(y_hat, y)
        numeric = central_difference(lambda p: loss(p, y), y_hat)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def ce_bce_gap(instances) -> float:
    worst = 0.0
    for y_hat, y in instances:
        rows_p = np.stack([y_hat, 1 - y_hat], axis=1)
        rows_y = np.stack([y, 1 - y], axis=1)
        worst = max(worst, abs(losses.ce(rows_p, rows_y) - losses.bce(y_hat, y)))
    return worst


def run_checks(seed: int = 0, n_random: int = 100) -> list:
    rng = np.random.default_rng(seed)
    sched = losses.LrSchedule(lr0=0.01, epoch_max=300)
    checks = [
        Check("poly_lr epoch 0", 0.01, losses.poly_lr(sched, 0), 1e-12),
        Check("poly_lr epoch 150/300", POLY_LR_HALFWAY, losses.poly_lr(sched, 150), 1e-9),
        Check("poly_lr epoch 300/300", 0.0, losses.poly_lr(sched, 300), 0.0),
        Check("deep_supervision [1,1,1]", 1.75, losses.deep_supervision_loss([1, 1, 1]), 0.0),
        Check("deep_supervision [x]", 0.3, losses.deep_supervision_loss([0.3]), 0.0),
        Check("bce y=[1] p=[0.5]", LN2, losses.bce([0.5], [1]), 1e-9),
        Check("bce y=[1,0] p=[0.9,0.1]", BCE_09_01, losses.bce([0.9, 0.1], [1, 0]), 1e-9),
        Check("ce y=[1,0] p=[0.5,0.5]", LN2, losses.ce([[0.5, 0.5]], [[1, 0]]), 1e-9),
        Check("dice_loss [1,1,0,0] vs [1,0,1,0]", 0.5, losses.dice_loss([1, 1, 0, 0], [1, 0, 1, 0], smooth=0.0), 1e-12),
        Check("grad_bce y=1 p=0.5", -2.0, float(losses.grad_bce([0.5], [1])[0]), 1e-12),
    ]
    instances = list(_random_instances(rng, n_random))
    checks.append(Check(f"two-class ce == bce ({n_random} random)", 0.0, ce_bce_gap(instances), 1e-7))
    checks.append(Check(f"grad_bce vs central differences ({n_random} random)", 0.0,
                        gradient_error(losses.grad_bce, losses.bce, instances), 1e-5))
    checks.append(Check(f"grad_dice vs central differences ({n_random} random)", 0.0,
                        gradient_error(losses.grad_dice, losses.dice_loss, instances), 1e-5))
    return checks
