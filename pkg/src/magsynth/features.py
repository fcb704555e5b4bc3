"""Static 57-feature descriptor: 9 per channel plus 3 cross-channel correlations.

Per-channel features, in order: mean, std, min, max, last-first, total absolute
variation, mean absolute slope, energy (mean of squares), index of the
largest-magnitude entry divided by T. Correlation pairs: (B_s1Y, B_s2Y),
(B_s1Z, B_s2Z), (B_s1C5, B_s2C6); a correlation with a degenerate (zero
variance) channel is 0.
"""

from __future__ import annotations

import numpy as np

from .core import CHANNEL_NAMES, N_CHANNELS, N_TIMESTEPS

PER_CHANNEL_FEATURES = (
    "mean",
    "std",
    "min",
    "max",
    "last_minus_first",
    "total_abs_variation",
    "mean_abs_slope",
    "energy",
    "extremum_index_frac",
)
CORRELATION_PAIRS = ((0, 2), (1, 3), (4, 5))
N_FEATURES = N_CHANNELS * len(PER_CHANNEL_FEATURES) + len(CORRELATION_PAIRS)


def feature_names() -> tuple[str, ...]:
    names = [
        f"{CHANNEL_NAMES[c]}_{feat}"
        for c in range(N_CHANNELS)
        for feat in PER_CHANNEL_FEATURES
    ]
    names += [f"corr_{CHANNEL_NAMES[a]}_{CHANNEL_NAMES[b]}" for a, b in CORRELATION_PAIRS]
    return tuple(names)


def _pearson(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlation of (B, T) against (B, T); degenerate rows -> 0."""
    xm = x - x.mean(axis=1, keepdims=True)
    ym = y - y.mean(axis=1, keepdims=True)
    cov = (xm * ym).mean(axis=1)
    denom = x.std(axis=1) * y.std(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, cov / denom, 0.0)
    return np.clip(corr, -1.0, 1.0)


def extract_features_batch(sigs: np.ndarray) -> np.ndarray:
    """Descriptors for a stack of signatures (B, T, C) -> (B, 57)."""
    sigs = np.asarray(sigs, dtype=np.float64)
    if sigs.ndim != 3 or sigs.shape[1:] != (N_TIMESTEPS, N_CHANNELS):
        raise ValueError(f"expected (B, {N_TIMESTEPS}, {N_CHANNELS}), got {sigs.shape}")
    b = sigs.shape[0]
    diffs = np.abs(np.diff(sigs, axis=1))
    per_channel = np.stack(
        [
            sigs.mean(axis=1),
            sigs.std(axis=1),
            sigs.min(axis=1),
            sigs.max(axis=1),
            sigs[:, -1, :] - sigs[:, 0, :],
            diffs.sum(axis=1),
            diffs.mean(axis=1),
            (sigs**2).mean(axis=1),
            np.argmax(np.abs(sigs), axis=1) / N_TIMESTEPS,
        ],
        axis=2,
    )  # (B, C, 9)
    corrs = np.stack(
        [_pearson(sigs[:, :, a], sigs[:, :, pair_b]) for a, pair_b in CORRELATION_PAIRS],
        axis=1,
    )
    return np.concatenate([per_channel.reshape(b, -1), corrs], axis=1)


def extract_features(sig: np.ndarray) -> np.ndarray:
    """Descriptor for one signature (T, C) -> (57,)."""
    return extract_features_batch(np.asarray(sig, dtype=np.float64)[None])[0]
