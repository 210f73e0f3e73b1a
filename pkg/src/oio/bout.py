"""Bout detection: moving-average smoothing and the differential test against a baseline."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigurationError

BASELINE_RULES = ("max", "mean", "any")


@dataclass(frozen=True)
class BoutSignal:
    smoothed: float
    delta: float
    toward_source: bool


@dataclass
class BoutDetectorState:
    baseline: tuple[float, ...]
    window: deque = field(default_factory=deque)
    prev_smoothed: float = 0.0
    prev_delta: float = 0.0
    baseline_rule: str = "max"

    @property
    def window_length(self) -> int:
        return self.window.maxlen

    @property
    def threshold(self) -> float:
        """Level the smoothed signal must beat to count as above baseline."""
        if self.baseline_rule == "mean":
            return sum(self.baseline) / len(self.baseline)
        if self.baseline_rule == "any":
            return min(self.baseline)
        return max(self.baseline)


def init_baseline(first: Sequence[float], window: int = 5, baseline_rule: str = "max") -> BoutDetectorState:
    """Store the initial measurements as the baseline and prime the smoothing window with them."""
    values = tuple(float(v) for v in first)
    if len(values) != window:
        raise ConfigurationError(f"baseline needs exactly {window} measurements, got {len(values)}")
    if baseline_rule not in BASELINE_RULES:
        raise ConfigurationError(f"baseline_rule must be one of {BASELINE_RULES}")
    win = deque(values, maxlen=window)
    return BoutDetectorState(
        baseline=values,
        window=win,
        prev_smoothed=sum(values) / window,
        prev_delta=0.0,
        baseline_rule=baseline_rule,
    )


def smooth(state: BoutDetectorState, y: float) -> float:
    state.window.append(float(y))
    return sum(state.window) / len(state.window)


def detect(state: BoutDetectorState, y: float) -> BoutSignal:
    smoothed = smooth(state, y)
    delta = smoothed - state.prev_smoothed
    toward = delta > state.prev_delta and smoothed > state.threshold
    state.prev_smoothed = smoothed
    state.prev_delta = delta
    return BoutSignal(smoothed, delta, toward)
