"""Sliding-window slope monitoring and the split trigger."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

WINDOW_FLOOR = 20
WINDOW_FRACTION = 0.0002
WARMUP_FLOOR = 50
EPS_SPLIT_SCALE = 1e-4


class InsufficientHistory(ValueError):
    pass


@dataclass
class MonitorConfig:
    """``None`` fields are resolved from the planned iteration count and the first loss."""

    warmup: Optional[int] = None
    window: Optional[int] = None
    eps_split: Optional[float] = None

    def resolve(self, planned_iterations: int) -> "MonitorConfig":
        window = self.window if self.window is not None else default_window(planned_iterations)
        warmup = self.warmup if self.warmup is not None else default_warmup(window)
        cfg = MonitorConfig(warmup, window, self.eps_split)
        cfg.validate()
        return cfg

    def validate(self):
        if self.window is not None and self.window < 2:
            raise ValueError("window must be >= 2")
        if self.window is not None and self.warmup is not None and self.warmup < self.window:
            raise ValueError("warmup must be >= window")
        if self.eps_split is not None and not self.eps_split > 0:
            raise ValueError("eps_split must be positive")


def default_window(planned_iterations: int) -> int:
    return max(WINDOW_FLOOR, round(WINDOW_FRACTION * planned_iterations))


def default_warmup(window: int) -> int:
    return max(2 * window, WARMUP_FLOOR)


def default_eps_split(first_loss: float, window: int) -> float:
    eps = EPS_SPLIT_SCALE * abs(first_loss) / window
    return eps if eps > 0 else EPS_SPLIT_SCALE / window


def slope(history: Sequence[float], W: int) -> float:
    """Least-squares slope of the last ``W`` values against 0..W-1."""
    if W < 2:
        raise InsufficientHistory("window must be >= 2")
    if len(history) < W:
        raise InsufficientHistory(f"need {W} values, have {len(history)}")
    y = np.asarray(history[-W:], dtype=float)
    x = np.arange(W) - (W - 1) / 2.0
    return float(x @ (y - y.mean()) / (x @ x))


def split_condition(slope_mixed: float, per_task_slopes: Sequence[float], eps_split: float) -> bool:
    """Stagnation (``|slope| < eps``) or divergence (some member's slope is positive)."""
    if not math.isfinite(slope_mixed):
        raise ValueError("non-finite mixed slope")
    return abs(slope_mixed) < eps_split or any(s > 0 for s in per_task_slopes)
