"""Domain types, bridge configuration, seed derivation, and config hashing.

Everything downstream shares these contracts:

- a signature is a (100, 6) float64 array, always finite;
- ``BridgeConfig`` collects every tunable generation parameter (the full
  parameter set is pinned by ``config_hash`` in emitted manifests);
- per-sample randomness derives from ``derive_sample_seed(master_seed,
  sample_id)`` so generation order and parallelism cannot change outputs;
- absent numeric labels are NaN, absent string labels are None.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, fields

import numpy as np

N_TIMESTEPS = 100
N_CHANNELS = 6
CHANNEL_NAMES = ("B_s1Y", "B_s1Z", "B_s2Y", "B_s2Z", "B_s1C5", "B_s2C6")

U_DIM = 21

GROUNDED = "grounded"
REGIME_B = "regime_b"

ANOMALY_SUBTYPES = (
    "sensor_dropout",
    "calibration_drift",
    "temporal_warp",
    "periodic_interference",
)
ANOMALY_ORIGINS = ("none", "synthetic_sensor", "regime_b")
SECOND_LIFE_CLASSES = ("reuse", "recondition")
CHEMISTRIES = ("LFP",)


def validate_signature(values) -> np.ndarray:
    """Coerce to a (100, 6) float64 array; reject wrong shapes and non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (N_TIMESTEPS, N_CHANNELS):
        raise ValueError(
            f"signature must be {N_TIMESTEPS}x{N_CHANNELS}, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("signature contains non-finite entries")
    return arr


@dataclass(frozen=True)
class BridgeConfig:
    """Full generation parameter set. All fields participate in config_hash."""

    gamma: float = 800.0
    k_nn: int = 8
    tau: float = 50.0
    cone_half_angle_deg: float = 75.0
    blend_slope: float = 1.5
    sensor_noise_frac: float = 0.05
    soc_fluct_frac: float = 0.04
    boxcar_window: int = 9
    amp_scale_coeff: float = 0.1
    broaden_base_width: float = 2.0
    broaden_u_coeff: float = 0.5
    grounded_range: tuple[float, float] = (3.06, 3.34)
    regime_b_range: tuple[float, float] = (2.54, 3.06)
    bridge_version: str = "v1.0"
    schema_version: str = "1.0"

    def __post_init__(self):
        object.__setattr__(self, "grounded_range", tuple(float(v) for v in self.grounded_range))
        object.__setattr__(self, "regime_b_range", tuple(float(v) for v in self.regime_b_range))
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.k_nn < 1:
            raise ValueError("k_nn must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not 0 < self.cone_half_angle_deg < 180:
            raise ValueError("cone_half_angle_deg must be in (0, 180)")
        if len(self.grounded_range) != 2 or len(self.regime_b_range) != 2:
            raise ValueError("voltage ranges must be (low, high) pairs")
        b_lo, b_hi = self.regime_b_range
        g_lo, g_hi = self.grounded_range
        if not (b_lo < b_hi and g_lo < g_hi):
            raise ValueError("voltage ranges must be increasing")
        if b_hi != g_lo:
            raise ValueError(
                "regime_b_range and grounded_range must be contiguous and disjoint"
            )


_CONFIG_FIELDS = tuple(f.name for f in fields(BridgeConfig))


def load_config(path) -> BridgeConfig:
    """Read a BridgeConfig from a JSON document. Unknown keys are an error."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config document must be a JSON object")
    unknown = sorted(set(raw) - set(_CONFIG_FIELDS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return BridgeConfig(**raw)


def _canonical(value) -> str:
    if isinstance(value, dict):
        items = sorted(value.items())
        return "{" + ",".join(f"{json.dumps(str(k))}:{_canonical(v)}" for k, v in items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError("non-finite number in canonical serialization")
        return f"{v:.17g}"
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"unsupported type in canonical serialization: {type(value)!r}")


def canonical_config_text(config: BridgeConfig) -> str:
    """Canonical serialization: sorted keys, 17-significant-digit numerals, no whitespace."""
    return _canonical({f.name: getattr(config, f.name) for f in fields(config)})


def config_hash(config: BridgeConfig) -> str:
    """SHA-256 hex digest of the canonical config serialization."""
    return hashlib.sha256(canonical_config_text(config).encode("utf-8")).hexdigest()


_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_sample_seed(master_seed: int, sample_id: str) -> int:
    """First 8 bytes (big-endian) of SHA-256(master_seed as 8 BE bytes || sample_id)."""
    if not sample_id:
        raise ValueError("sample_id must be non-empty")
    payload = struct.pack(">Q", master_seed & _MASK64) + sample_id.encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


@dataclass(frozen=True)
class GenerationRequest:
    """One generation request. Grounded requests carry soh/soc/u/cell_id; Regime-B carry none."""

    voltage: float
    soc: float = math.nan
    soh: float = math.nan
    u: np.ndarray | None = None
    cell_id: str | None = None
    regime_hint: str | None = None

    def __post_init__(self):
        if self.u is not None:
            u = np.asarray(self.u, dtype=np.float64)
            if u.shape != (U_DIM,):
                raise ValueError(f"u must be a {U_DIM}-vector")
            object.__setattr__(self, "u", u)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """A generated signature plus its full metadata row."""

    signature: np.ndarray
    sample_id: str
    parent_sample_id: str | None
    cell_id: str | None
    generation_seed: int
    bridge_version: str
    bridge_config_hash: str
    schema_version: str
    voltage: float
    soc: float
    soh: float
    chemistry: str
    regime: str
    nearest_anchor: float
    u_features: np.ndarray | None
    second_life_class: str | None
    anomaly_flag: bool
    anomaly_subtype: str
    anomaly_origin: str
    anomaly_severity: float


def validate_record(rec: SampleRecord) -> None:
    """Assert every SampleRecord invariant; raises ValueError on the first violation."""
    validate_signature(rec.signature)
    if rec.regime not in (GROUNDED, REGIME_B):
        raise ValueError(f"unknown regime {rec.regime!r}")
    if rec.anomaly_subtype != "none" and rec.anomaly_subtype not in ANOMALY_SUBTYPES:
        raise ValueError(f"unknown anomaly_subtype {rec.anomaly_subtype!r}")
    if rec.anomaly_origin not in ANOMALY_ORIGINS:
        raise ValueError(f"unknown anomaly_origin {rec.anomaly_origin!r}")
    if rec.chemistry not in CHEMISTRIES:
        raise ValueError(f"unknown chemistry {rec.chemistry!r}")

    if rec.regime == REGIME_B:
        if not rec.anomaly_flag:
            raise ValueError(f"{rec.sample_id}: regime_b row must carry anomaly_flag")
        if not math.isnan(rec.soh):
            raise ValueError(f"{rec.sample_id}: regime_b row must have NaN soh")
        if rec.u_features is not None:
            raise ValueError(f"{rec.sample_id}: regime_b row must have absent u_features")
        if rec.second_life_class is not None:
            raise ValueError(f"{rec.sample_id}: regime_b row must have absent second_life_class")
        if rec.anomaly_origin != "regime_b":
            raise ValueError(f"{rec.sample_id}: regime_b row must have anomaly_origin regime_b")

    if rec.anomaly_subtype != "none":
        if rec.parent_sample_id is None:
            raise ValueError(f"{rec.sample_id}: anomaly row must carry parent_sample_id")
        if not rec.anomaly_flag:
            raise ValueError(f"{rec.sample_id}: anomaly row must carry anomaly_flag")
        if not (math.isfinite(rec.anomaly_severity) and 0 < rec.anomaly_severity <= 1):
            raise ValueError(f"{rec.sample_id}: anomaly_severity must be in (0, 1]")

    if rec.regime == GROUNDED and rec.anomaly_subtype == "none":
        if rec.anomaly_flag:
            raise ValueError(f"{rec.sample_id}: clean grounded row must not carry anomaly_flag")
        if rec.anomaly_origin != "none":
            raise ValueError(f"{rec.sample_id}: clean grounded row must have anomaly_origin none")
