"""Dataset planning, full-sample generation, shard writing, and integrity audit.

Output directory layout:
    shards/shard-00.f64 ...   signals, row-major little-endian float64, 100x6 per row
    shards/shard-00.csv ...   metadata rows of that shard, in binary row order
    metadata.csv              metadata-only view of every row, dataset order
    index.csv                 sample_id -> shard / row / byte offset
    manifest.json             provenance: versions, config hash, seed, counts, time grid
    SHA256SUMS                "hexdigest  relpath" for every file above
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text, write_checksums
from .anomaly import SEVERITY_LEVELS, inject_anomaly
from .bank import LOW_ANCHORS, MorphologyBank, base_morphology
from .conditioning import ConditioningRecord, second_life_label
from .core import (
    ANOMALY_SUBTYPES,
    GROUNDED,
    N_CHANNELS,
    N_TIMESTEPS,
    REGIME_B,
    BridgeConfig,
    GenerationRequest,
    SampleRecord,
    config_hash,
    derive_sample_seed,
    validate_record,
)
from .embed import embed_signatures
from .modulator import (
    LdaModel,
    degradation_delta,
    lda_model_sha256,
    modulate_projected,
    project_embedding,
)
from .noise import apply_noise
from .regime import classify

_ROW_BYTES = N_TIMESTEPS * N_CHANNELS * 8


@dataclass(frozen=True, eq=False)
class DatasetPlan:
    """Counts, conditioning, seed, and config for one emission."""

    n_grounded: int
    n_anomaly: int
    n_regime_b: int
    conditioning: tuple[ConditioningRecord, ...]
    master_seed: int
    config: BridgeConfig
    n_shards: int = 5

    def __post_init__(self):
        object.__setattr__(self, "conditioning", tuple(self.conditioning))
        if self.n_grounded < 1:
            raise ValueError("plan needs at least one grounded sample")
        if self.n_anomaly % len(ANOMALY_SUBTYPES) != 0:
            raise ValueError("n_anomaly must be divisible by 4 (balanced subtypes)")
        if self.n_anomaly > self.n_grounded:
            raise ValueError("cannot draw more anomaly parents than grounded samples")
        if not self.conditioning:
            raise ValueError("plan needs conditioning records")
        if self.n_shards < 1:
            raise ValueError("n_shards must be >= 1")

    @property
    def total_rows(self) -> int:
        return self.n_grounded + self.n_anomaly + self.n_regime_b

    @classmethod
    def release(cls, conditioning, master_seed: int, config: BridgeConfig | None = None):
        return cls(5600, 600, 560, tuple(conditioning), master_seed, config or BridgeConfig())

    @classmethod
    def demo_small(cls, conditioning, master_seed: int, config: BridgeConfig | None = None):
        # release / 10; 676 rows shard evenly at 4x169
        return cls(
            560, 60, 56, tuple(conditioning), master_seed, config or BridgeConfig(), n_shards=4
        )


def _grounded_request(plan: DatasetPlan, index: int, voltage: float) -> GenerationRequest:
    cell = plan.conditioning[index % len(plan.conditioning)]
    return GenerationRequest(
        voltage=float(voltage), soc=cell.soc, soh=cell.soh, u=cell.u, cell_id=cell.cell_id
    )


def plan_grounded_voltages(plan: DatasetPlan) -> np.ndarray:
    rng = np.random.default_rng(derive_sample_seed(plan.master_seed, "plan:grounded-voltages"))
    lo, hi = plan.config.grounded_range
    return rng.uniform(lo, hi, plan.n_grounded)


def plan_anomaly_assignments(plan: DatasetPlan) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Parent indices (without replacement), subtype per child, severity per child."""
    rng = np.random.default_rng(derive_sample_seed(plan.master_seed, "plan:anomaly"))
    parents = rng.choice(plan.n_grounded, size=plan.n_anomaly, replace=False)
    per_subtype = plan.n_anomaly // len(ANOMALY_SUBTYPES)
    subtypes = [ANOMALY_SUBTYPES[j // per_subtype] for j in range(plan.n_anomaly)]
    severities = rng.choice(np.asarray(SEVERITY_LEVELS), size=plan.n_anomaly)
    return parents, subtypes, severities


def _record(
    sig: np.ndarray,
    req: GenerationRequest,
    decision,
    sample_id: str,
    seed: int,
    config: BridgeConfig,
    cfg_hash: str,
) -> SampleRecord:
    grounded = decision.regime == GROUNDED
    return SampleRecord(
        signature=sig,
        sample_id=sample_id,
        parent_sample_id=None,
        cell_id=req.cell_id if grounded else None,
        generation_seed=seed,
        bridge_version=config.bridge_version,
        bridge_config_hash=cfg_hash,
        schema_version=config.schema_version,
        voltage=float(req.voltage),
        soc=float(req.soc) if grounded else math.nan,
        soh=float(req.soh) if grounded else math.nan,
        chemistry="LFP",
        regime=decision.regime,
        nearest_anchor=decision.nearest_anchor,
        u_features=req.u if grounded else None,
        second_life_class=second_life_label(req.soh) if grounded else None,
        anomaly_flag=not grounded,
        anomaly_subtype="none",
        anomaly_origin="none" if grounded else "regime_b",
        anomaly_severity=math.nan,
    )


def generate_sample(
    req: GenerationRequest,
    bank: MorphologyBank,
    model: LdaModel,
    config: BridgeConfig,
    master_seed: int,
    sample_id: str,
) -> SampleRecord:
    """Generate one sample. Deterministic in (request, config, master_seed, sample_id).

    Grounded path: stochastic base -> modulate(soh, u) -> noise(soc).
    Regime-B path: stochastic base -> noise at neutral SOC; soh/u/second-life
    absent, anomaly-flagged with origin regime_b. All randomness flows from
    derive_sample_seed(master_seed, sample_id) in a fixed draw order.
    """
    decision = classify(req.voltage, config, bank.anchors)
    seed = derive_sample_seed(master_seed, sample_id)
    rng = np.random.default_rng(seed)
    base = base_morphology(bank, req.voltage, "stochastic", rng)
    anchor_sigma = bank.sigma[bank.anchor_index(decision.nearest_anchor)]

    if decision.regime == GROUNDED:
        if req.u is None or req.cell_id is None:
            raise ValueError("grounded requests must carry soh, soc, u, and cell_id")
        delta = degradation_delta(req.soh)
        if delta == 0.0:
            sig = base.copy()
        else:
            z = project_embedding(
                embed_signatures(base[None], model.reservoir, batch_size=1)[0], model
            )
            sig = modulate_projected(base, delta, req.u, z, model, config)
        sig = apply_noise(sig, req.soc, anchor_sigma, config, rng)
    else:
        sig = apply_noise(base, math.nan, anchor_sigma, config, rng)

    return _record(sig, req, decision, sample_id, seed, config, config_hash(config))


def generate_records(plan: DatasetPlan, bank: MorphologyBank, model: LdaModel) -> list[SampleRecord]:
    """All plan rows in dataset order: grounded, anomaly children, Regime-B.

    The grounded pass batches the reservoir embedding across samples; every
    per-sample random draw still comes from that sample's own seeded stream.
    """
    config = plan.config
    cfg_hash = config_hash(config)
    voltages = plan_grounded_voltages(plan)

    grounded: list[SampleRecord] = []
    bases = np.empty((plan.n_grounded, N_TIMESTEPS, N_CHANNELS))
    rngs = []
    reqs = []
    decisions = []
    seeds = []
    for i in range(plan.n_grounded):
        sample_id = f"g-{i:05d}"
        req = _grounded_request(plan, i, voltages[i])
        decision = classify(req.voltage, config, bank.anchors)
        seed = derive_sample_seed(plan.master_seed, sample_id)
        rng = np.random.default_rng(seed)
        bases[i] = base_morphology(bank, req.voltage, "stochastic", rng)
        rngs.append(rng)
        reqs.append((sample_id, req))
        decisions.append(decision)
        seeds.append(seed)

    deltas = np.array([degradation_delta(req.soh) for _, req in reqs])
    active = np.nonzero(deltas > 0)[0]
    coords = np.zeros((plan.n_grounded, model.w_lda.shape[1]))
    if active.size:
        emb = embed_signatures(bases[active], model.reservoir)
        coords[active] = project_embedding(emb, model)

    for i in range(plan.n_grounded):
        sample_id, req = reqs[i]
        if deltas[i] == 0.0:
            sig = bases[i].copy()
        else:
            sig = modulate_projected(bases[i], deltas[i], req.u, coords[i], model, config)
        anchor_sigma = bank.sigma[bank.anchor_index(decisions[i].nearest_anchor)]
        sig = apply_noise(sig, req.soc, anchor_sigma, config, rngs[i])
        grounded.append(_record(sig, req, decisions[i], sample_id, seeds[i], config, cfg_hash))

    children: list[SampleRecord] = []
    parent_idx, subtypes, severities = plan_anomaly_assignments(plan)
    for j in range(plan.n_anomaly):
        child_id = f"a-{j:05d}"
        seed = derive_sample_seed(plan.master_seed, child_id)
        children.append(
            inject_anomaly(
                grounded[int(parent_idx[j])],
                subtypes[j],
                float(severities[j]),
                np.random.default_rng(seed),
                child_id,
                generation_seed=seed,
            )
        )

    regime_b: list[SampleRecord] = []
    for i in range(plan.n_regime_b):
        sample_id = f"b-{i:05d}"
        anchor = LOW_ANCHORS[i % len(LOW_ANCHORS)]
        req = GenerationRequest(voltage=anchor)
        regime_b.append(generate_sample(req, bank, model, config, plan.master_seed, sample_id))

    records = grounded + children + regime_b
    for rec in records:
        validate_record(rec)
    return records


# ---------------------------------------------------------------------------
# metadata serialization
# ---------------------------------------------------------------------------

METADATA_COLUMNS = (
    "sample_id",
    "parent_sample_id",
    "cell_id",
    "generation_seed",
    "bridge_version",
    "bridge_config_hash",
    "schema_version",
    "voltage",
    "soc",
    "soh",
    "chemistry",
    "regime",
    "nearest_anchor",
    "second_life_class",
    "anomaly_flag",
    "anomaly_subtype",
    "anomaly_origin",
    "anomaly_severity",
) + tuple(f"u_{j + 1:02d}" for j in range(21))


def _metadata_row(rec: SampleRecord) -> list[str]:
    u = rec.u_features
    return [
        rec.sample_id,
        rec.parent_sample_id or "",
        rec.cell_id or "",
        str(rec.generation_seed),
        rec.bridge_version,
        rec.bridge_config_hash,
        rec.schema_version,
        repr(float(rec.voltage)),
        repr(float(rec.soc)),
        repr(float(rec.soh)),
        rec.chemistry,
        rec.regime,
        repr(float(rec.nearest_anchor)),
        rec.second_life_class or "",
        "true" if rec.anomaly_flag else "false",
        rec.anomaly_subtype,
        rec.anomaly_origin,
        repr(float(rec.anomaly_severity)),
    ] + [repr(float(x)) for x in (u if u is not None else [math.nan] * 21)]


def _metadata_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METADATA_COLUMNS)
    for rec in records:
        writer.writerow(_metadata_row(rec))
    return buf.getvalue()


def _parse_metadata_text(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != METADATA_COLUMNS:
        raise ValueError("metadata header does not match the documented schema")
    rows = []
    for raw in reader:
        row = dict(zip(METADATA_COLUMNS, raw))
        u = np.array([float(row[f"u_{j + 1:02d}"]) for j in range(21)])
        rows.append(
            {
                "sample_id": row["sample_id"],
                "parent_sample_id": row["parent_sample_id"] or None,
                "cell_id": row["cell_id"] or None,
                "generation_seed": int(row["generation_seed"]),
                "bridge_version": row["bridge_version"],
                "bridge_config_hash": row["bridge_config_hash"],
                "schema_version": row["schema_version"],
                "voltage": float(row["voltage"]),
                "soc": float(row["soc"]),
                "soh": float(row["soh"]),
                "chemistry": row["chemistry"],
                "regime": row["regime"],
                "nearest_anchor": float(row["nearest_anchor"]),
                "second_life_class": row["second_life_class"] or None,
                "anomaly_flag": row["anomaly_flag"] == "true",
                "anomaly_subtype": row["anomaly_subtype"],
                "anomaly_origin": row["anomaly_origin"],
                "anomaly_severity": float(row["anomaly_severity"]),
                "u_features": None if np.isnan(u).all() else u,
            }
        )
    return rows


def read_metadata(dataset_dir) -> list[dict]:
    """Parse metadata.csv into typed row dicts (absent strings None, absent numbers NaN)."""
    path = Path(dataset_dir) / "metadata.csv"
    return _parse_metadata_text(path.read_text(encoding="utf-8"))


def read_signals(dataset_dir) -> tuple[list[str], np.ndarray]:
    """Signals for every row, aligned with metadata.csv order via index.csv."""
    root = Path(dataset_dir)
    by_id = {}
    with open(root / "index.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            by_id[row["sample_id"]] = (row["shard"], int(row["row"]))
    shard_data = {}
    for shard in sorted({s for s, _ in by_id.values()}):
        blob = np.fromfile(root / "shards" / shard, dtype="<f8")
        shard_data[shard] = blob.reshape(-1, N_TIMESTEPS, N_CHANNELS)
    ids = [m["sample_id"] for m in read_metadata(root)]
    sigs = np.stack([shard_data[by_id[i][0]][by_id[i][1]] for i in ids])
    return ids, sigs


def read_manifest(dataset_dir) -> dict:
    with open(Path(dataset_dir) / "manifest.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def emit_dataset(plan: DatasetPlan, bank: MorphologyBank, model: LdaModel, out_dir) -> dict:
    """Generate the plan and write shards, metadata, index, manifest, and checksums."""
    if plan.total_rows % plan.n_shards != 0:
        raise ValueError(
            f"plan rows ({plan.total_rows}) do not divide into {plan.n_shards} equal shards"
        )
    records = generate_records(plan, bank, model)
    rows_per_shard = plan.total_rows // plan.n_shards

    root = Path(out_dir)
    (root / "shards").mkdir(parents=True, exist_ok=True)

    index_rows = []
    shard_files = []
    for k in range(plan.n_shards):
        chunk = records[k * rows_per_shard : (k + 1) * rows_per_shard]
        shard_name = f"shard-{k:02d}.f64"
        blob = b"".join(rec.signature.astype("<f8").tobytes(order="C") for rec in chunk)
        atomic_write_bytes(root / "shards" / shard_name, blob)
        atomic_write_text(root / "shards" / f"shard-{k:02d}.csv", _metadata_csv(chunk))
        shard_files.append({"file": shard_name, "rows": rows_per_shard})
        for r, rec in enumerate(chunk):
            index_rows.append((rec.sample_id, shard_name, r, r * _ROW_BYTES))

    atomic_write_text(root / "metadata.csv", _metadata_csv(records))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "shard", "row", "byte_offset"])
    writer.writerows(index_rows)
    atomic_write_text(root / "index.csv", buf.getvalue())

    subtype_counts = {s: 0 for s in ANOMALY_SUBTYPES}
    for rec in records:
        if rec.anomaly_subtype != "none":
            subtype_counts[rec.anomaly_subtype] += 1
    manifest = {
        "format": "magsynth-dataset",
        "bridge_version": plan.config.bridge_version,
        "schema_version": plan.config.schema_version,
        "bridge_config_hash": config_hash(plan.config),
        "lda_model_sha256": lda_model_sha256(model),
        "master_seed": plan.master_seed,
        "counts": {
            "grounded": plan.n_grounded,
            "anomaly": plan.n_anomaly,
            "regime_b": plan.n_regime_b,
            "total": plan.total_rows,
            "anomaly_subtypes": subtype_counts,
        },
        "n_shards": plan.n_shards,
        "rows_per_shard": rows_per_shard,
        "shards": shard_files,
        "bank_anchors": [float(v) for v in bank.anchors],
        "time_norm": [float(x) for x in np.linspace(0.0, 1.0, N_TIMESTEPS)],
    }
    atomic_write_text(
        root / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    write_checksums(root)
    return manifest


# ---------------------------------------------------------------------------
# integrity audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegrityReport:
    """Violation counters over an emitted dataset; a clean release is all zeros."""

    total_rows: int
    duplicate_sample_ids: int
    duplicate_signal_hashes: int
    nonfinite_signal_entries: int
    wrong_length_signals: int
    metadata_shard_id_mismatches: int
    invalid_anomaly_parents: int
    record_invariant_violations: int

    @property
    def passed(self) -> bool:
        return all(v == 0 for v in self.counters().values())

    def counters(self) -> dict:
        return {
            "duplicate_sample_ids": self.duplicate_sample_ids,
            "duplicate_signal_hashes": self.duplicate_signal_hashes,
            "nonfinite_signal_entries": self.nonfinite_signal_entries,
            "wrong_length_signals": self.wrong_length_signals,
            "metadata_shard_id_mismatches": self.metadata_shard_id_mismatches,
            "invalid_anomaly_parents": self.invalid_anomaly_parents,
            "record_invariant_violations": self.record_invariant_violations,
        }

    def to_json(self) -> str:
        payload = {"total_rows": self.total_rows, "passed": self.passed, **self.counters()}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _row_invariant_ok(row: dict) -> bool:
    if row["regime"] == REGIME_B:
        if not row["anomaly_flag"]:
            return False
        if not math.isnan(row["soh"]) or row["u_features"] is not None:
            return False
        if row["second_life_class"] is not None:
            return False
        if row["anomaly_origin"] != "regime_b":
            return False
    elif row["regime"] == GROUNDED:
        if row["anomaly_subtype"] == "none" and row["anomaly_flag"]:
            return False
        if row["anomaly_subtype"] != "none" and not row["anomaly_flag"]:
            return False
    else:
        return False
    if row["anomaly_subtype"] != "none":
        if row["parent_sample_id"] is None:
            return False
        sev = row["anomaly_severity"]
        if not (math.isfinite(sev) and 0 < sev <= 1):
            return False
    return True


def audit_integrity(dataset_dir) -> IntegrityReport:
    """Run the seven release integrity checks against the files on disk."""
    import hashlib

    root = Path(dataset_dir)
    rows = read_metadata(root)
    by_id = {}
    duplicate_ids = 0
    for row in rows:
        if row["sample_id"] in by_id:
            duplicate_ids += 1
        else:
            by_id[row["sample_id"]] = row

    manifest = read_manifest(root)
    shard_ids: list[str] = []
    dup_hashes = 0
    nonfinite = 0
    wrong_length = 0
    seen_hashes = set()
    for entry in manifest["shards"]:
        shard_csv = (root / "shards" / entry["file"].replace(".f64", ".csv")).read_text(
            encoding="utf-8"
        )
        shard_rows = _parse_metadata_text(shard_csv)
        shard_ids.extend(r["sample_id"] for r in shard_rows)

        blob = (root / "shards" / entry["file"]).read_bytes()
        n_complete, remainder = divmod(len(blob), _ROW_BYTES)
        expected = len(shard_rows)
        wrong_length += abs(n_complete - expected) + (1 if remainder else 0)
        for r in range(n_complete):
            chunk = blob[r * _ROW_BYTES : (r + 1) * _ROW_BYTES]
            digest = hashlib.sha256(chunk).hexdigest()
            if digest in seen_hashes:
                dup_hashes += 1
            else:
                seen_hashes.add(digest)
            nonfinite += int(np.sum(~np.isfinite(np.frombuffer(chunk, dtype="<f8"))))

    meta_ids = [row["sample_id"] for row in rows]
    mismatches = sum(1 for a, b in zip(meta_ids, shard_ids) if a != b)
    mismatches += abs(len(meta_ids) - len(shard_ids))
    with open(root / "index.csv", "r", encoding="utf-8", newline="") as fh:
        index_ids = [r["sample_id"] for r in csv.DictReader(fh)]
    mismatches += sum(1 for a, b in zip(meta_ids, index_ids) if a != b)
    mismatches += abs(len(meta_ids) - len(index_ids))

    invalid_parents = 0
    for row in rows:
        if row["anomaly_subtype"] == "none":
            continue
        parent = by_id.get(row["parent_sample_id"]) if row["parent_sample_id"] else None
        if (
            parent is None
            or parent["anomaly_flag"]
            or parent["anomaly_subtype"] != "none"
            or parent["regime"] != GROUNDED
        ):
            invalid_parents += 1

    invariant_violations = sum(0 if _row_invariant_ok(row) else 1 for row in rows)

    return IntegrityReport(
        total_rows=len(rows),
        duplicate_sample_ids=duplicate_ids,
        duplicate_signal_hashes=dup_hashes,
        nonfinite_signal_entries=nonfinite,
        wrong_length_signals=wrong_length,
        metadata_shard_id_mismatches=mismatches,
        invalid_anomaly_parents=invalid_parents,
        record_invariant_violations=invariant_violations,
    )
