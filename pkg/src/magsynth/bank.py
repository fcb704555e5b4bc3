"""Morphology bank: per-anchor scan statistics, voltage interpolation, demo bank.

Bank file format (directory):
    header.json   {"format": "morphology-bank", "version": 1,
                   "anchors": [{"voltage": 2.54, "n_samples": 41}, ...]}
    samples.f64   raw little-endian float64, row-major (timestep-major),
                  100x6 per sample, concatenated in header order.

Per-anchor mean/std are always recomputed from the raw samples on ingestion;
any statistics present in the header are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import N_CHANNELS, N_TIMESTEPS, validate_signature

DEFAULT_ANCHORS = (2.54, 2.81, 3.00, 3.10, 3.34)
SAMPLES_PER_ANCHOR = 41
LOW_ANCHORS = (2.54, 2.81, 3.00)

_SAMPLE_BYTES = N_TIMESTEPS * N_CHANNELS * 8


@dataclass(frozen=True, eq=False)
class MorphologyBank:
    """Anchor voltages, raw per-anchor samples, and their empirical statistics.

    mu/sigma are the per-anchor empirical mean and population (divide-by-N)
    standard deviation over scan samples, per timestep and channel.
    """

    anchors: np.ndarray            # (A,)
    samples: tuple[np.ndarray, ...]  # per anchor: (n_a, 100, 6)
    mu: np.ndarray                 # (A, 100, 6)
    sigma: np.ndarray              # (A, 100, 6)

    @classmethod
    def from_samples(cls, anchors, samples) -> "MorphologyBank":
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.ndim != 1 or anchors.size < 2:
            raise ValueError("bank needs at least 2 anchors")
        if not np.all(np.diff(anchors) > 0):
            raise ValueError("anchor voltages must be strictly increasing")
        groups = []
        for v, grp in zip(anchors, samples):
            arr = np.asarray(grp, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[1:] != (N_TIMESTEPS, N_CHANNELS):
                raise ValueError(f"anchor {v}: samples must be (n, {N_TIMESTEPS}, {N_CHANNELS})")
            if arr.shape[0] < 2:
                raise ValueError(f"anchor {v}: needs >= 2 samples (std undefined otherwise)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"anchor {v}: non-finite sample values")
            groups.append(arr)
        if len(groups) != anchors.size:
            raise ValueError("anchor/sample group count mismatch")
        mu = np.stack([g.mean(axis=0) for g in groups])
        sigma = np.stack([g.std(axis=0) for g in groups])
        return cls(anchors=anchors, samples=tuple(groups), mu=mu, sigma=sigma)

    @property
    def n_samples(self) -> int:
        return int(sum(g.shape[0] for g in self.samples))

    def anchor_index(self, v: float) -> int:
        idx = int(np.argmin(np.abs(self.anchors - v)))
        return idx

    def all_samples(self) -> np.ndarray:
        """All bank samples stacked in anchor order, shape (N, 100, 6)."""
        return np.concatenate(self.samples, axis=0)

    def sample_anchor_labels(self) -> np.ndarray:
        """Anchor index of each row of all_samples()."""
        return np.concatenate(
            [np.full(g.shape[0], i, dtype=np.int64) for i, g in enumerate(self.samples)]
        )

    def channel_ranges(self) -> tuple[np.ndarray, np.ndarray]:
        """Bank-wide per-channel (min, max) over every sample entry."""
        stacked = self.all_samples()
        return stacked.min(axis=(0, 1)), stacked.max(axis=(0, 1))


def save_bank(bank: MorphologyBank, path) -> None:
    """Write a bank directory (header.json + samples.f64)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    header = {
        "format": "morphology-bank",
        "version": 1,
        "anchors": [
            {"voltage": float(v), "n_samples": int(g.shape[0])}
            for v, g in zip(bank.anchors, bank.samples)
        ],
        "n_timesteps": N_TIMESTEPS,
        "n_channels": N_CHANNELS,
    }
    with open(out / "header.json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    blob = np.concatenate([g.reshape(-1) for g in bank.samples])
    blob.astype("<f8").tofile(out / "samples.f64")


def ingest_bank(path) -> MorphologyBank:
    """Load a bank directory, recomputing all statistics from the raw samples."""
    root = Path(path)
    header_path = root / "header.json"
    if not header_path.is_file():
        raise ValueError(f"not a bank directory (missing header.json): {root}")
    with open(header_path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "morphology-bank":
        raise ValueError("header.json is not a morphology-bank header")
    entries = header.get("anchors")
    if not isinstance(entries, list) or not entries:
        raise ValueError("header.json carries no anchor table")
    voltages = [float(e["voltage"]) for e in entries]
    counts = [int(e["n_samples"]) for e in entries]
    if len(set(voltages)) != len(voltages):
        raise ValueError("duplicate anchor voltage in header")
    if any(c < 2 for c in counts):
        raise ValueError("every anchor needs >= 2 samples")

    blob = np.fromfile(root / "samples.f64", dtype="<f8")
    expected = sum(counts) * N_TIMESTEPS * N_CHANNELS
    if blob.size != expected:
        raise ValueError(
            f"samples.f64 holds {blob.size} values, header implies {expected}"
        )
    groups = []
    offset = 0
    for c in counts:
        n = c * N_TIMESTEPS * N_CHANNELS
        groups.append(blob[offset : offset + n].reshape(c, N_TIMESTEPS, N_CHANNELS))
        offset += n
    order = np.argsort(voltages)
    anchors = [voltages[i] for i in order]
    groups = [groups[i] for i in order]
    return MorphologyBank.from_samples(anchors, groups)


def _dip_spike(t: np.ndarray) -> np.ndarray:
    # difference of Gaussians: dip at ~42, spike at ~48, centered on timestep 45
    return np.exp(-((t - 48.0) ** 2) / 18.0) - np.exp(-((t - 42.0) ** 2) / 18.0)


# demo-bank curve family constants; channels are (B_s1Y, B_s1Z, B_s2Y, B_s2Z, B_s1C5, B_s2C6)
_BASE_AMP = np.array([80.0, 60.0, 74.0, 55.0, 14.0, 11.0])
_WIGGLE = np.array([0.10, 0.16, 0.12, 0.20, 0.08, 0.06])
_PHASE = np.array([0.0, 0.7, 0.3, 1.1, 0.5, 1.6])
_DIP_DEPTH = np.array([0.0, 0.0, 0.0, 0.0, 42.0, 34.0])
_JITTER_AMP = np.array([1.6, 1.3, 1.5, 1.2, 0.9, 0.8])


def _smooth_noise(rng: np.random.Generator, n: int, width: float = 3.0) -> np.ndarray:
    """Low-amplitude smooth noise: white Gaussian convolved with a Gaussian kernel."""
    raw = rng.standard_normal(n)
    radius = int(np.ceil(3 * width))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / width) ** 2)
    k /= k.sum()
    padded = np.pad(raw, radius, mode="wrap")
    return np.convolve(padded, k, mode="valid")


def generate_demo_bank(
    seed: int,
    anchors=DEFAULT_ANCHORS,
    samples_per_anchor: int = SAMPLES_PER_ANCHOR,
) -> MorphologyBank:
    """Procedural stand-in bank: 5 anchors x 41 scans of smooth 100x6 trajectories.

    Channel amplitude scales monotonically with anchor voltage; channels 5-6
    carry a dip-spike feature near timestep 45 whose depth varies across
    anchors and drives some entries negative.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(N_TIMESTEPS, dtype=np.float64)
    tt = t / (N_TIMESTEPS - 1)
    lo, hi = min(anchors), max(anchors)
    dos = _dip_spike(t)

    groups = []
    for v in anchors:
        rel = (v - lo) / (hi - lo)
        amp_scale = 0.55 + 1.45 * rel          # monotone amplitude growth with voltage
        depth_scale = 1.25 - 0.75 * rel        # dip deepens toward low voltage
        base = np.empty((N_TIMESTEPS, N_CHANNELS))
        for c in range(N_CHANNELS):
            shape = np.sin(np.pi * tt) + _WIGGLE[c] * np.sin(2 * np.pi * tt + _PHASE[c])
            base[:, c] = amp_scale * _BASE_AMP[c] * shape
            if _DIP_DEPTH[c] > 0:
                base[:, c] += depth_scale * _DIP_DEPTH[c] * dos
        scans = np.empty((samples_per_anchor, N_TIMESTEPS, N_CHANNELS))
        for s in range(samples_per_anchor):
            jitter = np.stack(
                [_JITTER_AMP[c] * _smooth_noise(rng, N_TIMESTEPS) for c in range(N_CHANNELS)],
                axis=1,
            )
            scans[s] = base + jitter
        groups.append(scans)
    return MorphologyBank.from_samples(np.asarray(anchors, dtype=np.float64), groups)


def interp_stats(bank: MorphologyBank, v: float) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated (mu, sigma) at voltage v between bracketing anchors.

    sigma(v)^2 is the convex combination of the bracketing anchor variances.
    """
    anchors = bank.anchors
    if not (anchors[0] <= v <= anchors[-1]):
        raise ValueError(
            f"voltage {v} outside anchor hull [{anchors[0]}, {anchors[-1]}]"
        )
    exact = np.nonzero(np.abs(anchors - v) <= 1e-12)[0]
    if exact.size:
        i = int(exact[0])
        return bank.mu[i].copy(), bank.sigma[i].copy()
    hi = int(np.searchsorted(anchors, v))
    lo = hi - 1
    alpha = (v - anchors[lo]) / (anchors[hi] - anchors[lo])
    mu = (1 - alpha) * bank.mu[lo] + alpha * bank.mu[hi]
    var = (1 - alpha) * bank.sigma[lo] ** 2 + alpha * bank.sigma[hi] ** 2
    return mu, np.sqrt(var)


def base_morphology(
    bank: MorphologyBank,
    v: float,
    mode: str = "stochastic",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Base sample at voltage v: anchor-interpolated mean, optionally jittered.

    replica mode returns mu(v) exactly; stochastic mode returns
    mu(v) + sigma(v) * eps with eps standard normal per entry from rng.
    """
    mu, sigma = interp_stats(bank, v)
    if mode == "replica":
        return mu
    if mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic mode requires an rng")
        eps = rng.standard_normal((N_TIMESTEPS, N_CHANNELS))
        return mu + sigma * eps
    raise ValueError(f"unknown mode {mode!r}")
