"""Voltage regime classification and nearest-anchor selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bank import DEFAULT_ANCHORS
from .core import GROUNDED, REGIME_B, BridgeConfig


class VoltageRangeError(ValueError):
    """Request voltage outside the supported window."""


@dataclass(frozen=True)
class RegimeDecision:
    regime: str
    nearest_anchor: float


def classify(v: float, config: BridgeConfig, anchors=DEFAULT_ANCHORS) -> RegimeDecision:
    """Map a voltage to grounded / regime_b and its nearest anchor.

    Grounded covers the closed grounded range; Regime B covers
    [regime_b low, grounded low). Anything else is rejected. Nearest-anchor
    ties break to the lower anchor.
    """
    if not math.isfinite(v):
        raise VoltageRangeError("voltage must be finite")
    b_lo, b_hi = config.regime_b_range
    g_lo, g_hi = config.grounded_range
    if v < b_lo or v > g_hi:
        raise VoltageRangeError(
            f"voltage {v} V unsupported; supported range is [{b_lo}, {g_hi}] V"
        )
    regime = GROUNDED if v >= g_lo else REGIME_B
    arr = np.asarray(anchors, dtype=np.float64)
    nearest = float(arr[int(np.argmin(np.abs(arr - v)))])  # argmin picks the lower on ties
    return RegimeDecision(regime=regime, nearest_anchor=nearest)
