"""Synthetic sensor anomalies derived from clean grounded parents.

Four subtypes, each parameterized by severity in (0, 1]:

- sensor_dropout: zero-fill one sensor group (channels {1,2,5} or {3,4,6},
  1-indexed) over a contiguous window of round(10 + 40*severity) timesteps;
- calibration_drift: per channel, gain ramp 1 -> 1 + 0.3*severity plus offset
  ramp 0 -> 0.05*severity*range;
- temporal_warp: resample at t' = t + severity*0.08*T*sin(2*pi*t/T) by linear
  interpolation back onto the fixed 100-point grid;
- periodic_interference: add one sinusoidal tone (f in [5, 15] cycles, random
  phase) with per-channel amplitude severity*0.05*range.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import GROUNDED, N_CHANNELS, N_TIMESTEPS, ANOMALY_SUBTYPES, SampleRecord

SENSOR_GROUPS = ((0, 1, 4), (2, 3, 5))  # 0-indexed: {B_s1Y,B_s1Z,B_s1C5}, {B_s2Y,B_s2Z,B_s2C6}
SEVERITY_LEVELS = (0.25, 0.5, 0.75, 1.0)


def _dropout(sig: np.ndarray, severity: float, rng: np.random.Generator) -> np.ndarray:
    out = sig.copy()
    group = SENSOR_GROUPS[int(rng.integers(len(SENSOR_GROUPS)))]
    length = int(round(10 + 40 * severity))
    start = int(rng.integers(0, N_TIMESTEPS - length + 1))
    out[start : start + length, group] = 0.0
    return out


def _drift(sig: np.ndarray, severity: float) -> np.ndarray:
    gain = np.linspace(1.0, 1.0 + 0.3 * severity, N_TIMESTEPS)[:, None]
    ranges = sig.max(axis=0) - sig.min(axis=0)
    offset = np.linspace(0.0, 1.0, N_TIMESTEPS)[:, None] * (0.05 * severity * ranges)
    return sig * gain + offset


def _warp(sig: np.ndarray, severity: float) -> np.ndarray:
    t = np.arange(N_TIMESTEPS, dtype=np.float64)
    warped = t + severity * 0.08 * N_TIMESTEPS * np.sin(2 * np.pi * t / N_TIMESTEPS)
    out = np.empty_like(sig)
    for c in range(N_CHANNELS):
        out[:, c] = np.interp(warped, t, sig[:, c])  # clamps at the grid ends
    return out


def _interference(sig: np.ndarray, severity: float, rng: np.random.Generator) -> np.ndarray:
    freq = rng.uniform(5.0, 15.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    t = np.arange(N_TIMESTEPS, dtype=np.float64)
    tone = np.sin(2 * np.pi * freq * t / N_TIMESTEPS + phase)[:, None]
    amps = severity * 0.05 * (sig.max(axis=0) - sig.min(axis=0))
    return sig + tone * amps


def inject_anomaly(
    parent: SampleRecord,
    subtype: str,
    severity: float,
    rng: np.random.Generator,
    child_sample_id: str,
    generation_seed: int = 0,
) -> SampleRecord:
    """Derive an anomaly child from a clean grounded parent. The parent is untouched."""
    if parent.regime != GROUNDED:
        raise ValueError("anomaly parents must be grounded-regime samples")
    if parent.anomaly_flag or parent.anomaly_subtype != "none":
        raise ValueError("anomaly parents must be clean")
    if subtype not in ANOMALY_SUBTYPES:
        raise ValueError(f"unknown anomaly subtype {subtype!r}")
    if not (math.isfinite(severity) and 0 < severity <= 1):
        raise ValueError(f"severity must be in (0, 1], got {severity}")

    sig = parent.signature
    if subtype == "sensor_dropout":
        perturbed = _dropout(sig, severity, rng)
    elif subtype == "calibration_drift":
        perturbed = _drift(sig, severity)
    elif subtype == "temporal_warp":
        perturbed = _warp(sig, severity)
    else:
        perturbed = _interference(sig, severity, rng)

    return dataclasses.replace(
        parent,
        signature=perturbed,
        sample_id=child_sample_id,
        parent_sample_id=parent.sample_id,
        generation_seed=generation_seed,
        anomaly_flag=True,
        anomaly_subtype=subtype,
        anomaly_origin="synthetic_sensor",
        anomaly_severity=float(severity),
    )
