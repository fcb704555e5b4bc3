"""Additive sensor noise and SOC-dependent low-frequency fluctuation."""

from __future__ import annotations

import math

import numpy as np

from .core import N_CHANNELS, N_TIMESTEPS, BridgeConfig, validate_signature


def apply_noise(
    sig: np.ndarray,
    soc: float,
    anchor_sigma: np.ndarray,
    config: BridgeConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Add sensor noise plus an SOC-scaled smoothed fluctuation per channel.

    Sensor noise is zero-mean Gaussian with per-channel std equal to
    sensor_noise_frac times the time-mean of the anchor's channel std. The
    fluctuation is boxcar-smoothed Gaussian noise normalized to unit peak and
    scaled by soc_fluct_frac * channel range * |soc - 50| / 50. NaN soc is
    treated as 50 (zero fluctuation). Both noise sources are always drawn from
    rng in fixed order, so the stream advances identically regardless of scale.
    """
    sig = validate_signature(sig)
    anchor_sigma = np.asarray(anchor_sigma, dtype=np.float64)
    if anchor_sigma.shape != (N_TIMESTEPS, N_CHANNELS):
        raise ValueError("anchor_sigma must be 100x6")

    chan_sigma = anchor_sigma.mean(axis=0)
    sensor = rng.standard_normal((N_TIMESTEPS, N_CHANNELS)) * (
        config.sensor_noise_frac * chan_sigma
    )

    soc_eff = 50.0 if math.isnan(soc) else float(soc)
    soc_factor = abs(soc_eff - 50.0) / 50.0
    window = np.full(config.boxcar_window, 1.0 / config.boxcar_window)

    fluct = np.zeros((N_TIMESTEPS, N_CHANNELS))
    for c in range(N_CHANNELS):
        raw = rng.standard_normal(N_TIMESTEPS)
        smooth = np.convolve(raw, window, mode="same")
        peak = np.max(np.abs(smooth))
        if peak == 0:
            continue
        chan_range = float(sig[:, c].max() - sig[:, c].min())
        fluct[:, c] = smooth / peak * (config.soc_fluct_frac * chan_range * soc_factor)

    return sig + sensor + fluct
