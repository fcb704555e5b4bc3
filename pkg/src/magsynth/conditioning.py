"""Conditioning records: cell SOH/SOC/pulse features, labels, and the SOH shuffle.

Table format (delimited text, header required):
    cell_id,soh,soc,u_01,...,u_21,chemistry
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import CHEMISTRIES, U_DIM

SOH_RELEASED_RANGE = (0.744, 0.962)
SOC_LEVELS = tuple(float(s) for s in range(5, 55, 5))
SECOND_LIFE_CUTOFF = 0.85

# demo pulse-feature model: u_j = p_j + q*soh + noise. The slope is constant
# across features so the feature dispersion stays SOH-independent while the
# feature mean tracks SOH.
_U_BASE = np.linspace(2.9, 3.5, U_DIM) + 0.05 * np.sin(np.arange(U_DIM, dtype=np.float64))
_U_SLOPE = 0.3
_U_NOISE = 0.01


@dataclass(frozen=True, eq=False)
class ConditioningRecord:
    """One cell's label tuple driving grounded generation."""

    cell_id: str
    soh: float
    soc: float
    u: np.ndarray
    chemistry: str = "LFP"
    original_soh: float = math.nan  # set by shuffle_soh; NaN when labels are unshuffled

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        if u.shape != (U_DIM,):
            raise ValueError(f"u must be a {U_DIM}-vector")
        if not np.all(np.isfinite(u)):
            raise ValueError("u contains non-finite values")
        object.__setattr__(self, "u", u)
        if not (math.isfinite(self.soh) and 0 < self.soh <= 1):
            raise ValueError(f"soh must be in (0, 1], got {self.soh}")
        if not math.isfinite(self.soc):
            raise ValueError("soc must be finite")
        if self.chemistry not in CHEMISTRIES:
            raise ValueError(f"unsupported chemistry {self.chemistry!r}")

    @property
    def grading_soh(self) -> float:
        """The per-cell truth to grade against (original soh when shuffled)."""
        return self.original_soh if math.isfinite(self.original_soh) else self.soh


def generate_demo_conditioning(n_cells: int, seed: int) -> list[ConditioningRecord]:
    """Synthesize demo cells: soh uniform in the released range, soc on the 5..50 grid."""
    if n_cells < 2:
        raise ValueError("demo conditioning needs n_cells >= 2")
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_cells):
        soh = float(rng.uniform(*SOH_RELEASED_RANGE))
        soc = float(rng.choice(SOC_LEVELS))
        u = _U_BASE + _U_SLOPE * soh + rng.normal(0.0, _U_NOISE, U_DIM)
        records.append(
            ConditioningRecord(cell_id=f"cell-{i:04d}", soh=soh, soc=soc, u=u)
        )
    return records


_HEADER = ["cell_id", "soh", "soc"] + [f"u_{j + 1:02d}" for j in range(U_DIM)] + ["chemistry"]


def write_conditioning(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HEADER)
        for r in records:
            writer.writerow(
                [r.cell_id, repr(r.soh), repr(r.soc)]
                + [repr(float(x)) for x in r.u]
                + [r.chemistry]
            )


def read_conditioning(path) -> list[ConditioningRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("conditioning table is empty") from None
        if header != _HEADER:
            raise ValueError("conditioning table header does not match the documented format")
        records = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_HEADER):
                raise ValueError(f"line {lineno}: expected {len(_HEADER)} fields")
            cell_id = row[0]
            if cell_id in seen:
                raise ValueError(f"duplicate cell_id {cell_id!r}")
            seen.add(cell_id)
            records.append(
                ConditioningRecord(
                    cell_id=cell_id,
                    soh=float(row[1]),
                    soc=float(row[2]),
                    u=np.array([float(x) for x in row[3 : 3 + U_DIM]]),
                    chemistry=row[-1],
                )
            )
    return records


def load_conditioning(source) -> list[ConditioningRecord]:
    """Load records from a table path, or synthesize from {"n_cells": ..., "seed": ...}."""
    if isinstance(source, dict):
        return generate_demo_conditioning(int(source["n_cells"]), int(source["seed"]))
    return read_conditioning(Path(source))


def second_life_label(soh: float) -> str:
    """reuse above the 0.85 cutoff, recondition at or below it. Strict inequality."""
    if not math.isfinite(soh):
        raise ValueError("soh must be finite")
    if not 0 < soh <= 1:
        raise ValueError(f"soh must be in (0, 1], got {soh}")
    return "reuse" if soh > SECOND_LIFE_CUTOFF else "recondition"


def shuffle_soh(records, seed: int) -> list[ConditioningRecord]:
    """Permute soh values uniformly across cells, preserving each original in original_soh."""
    if len(records) < 2:
        raise ValueError("shuffle needs >= 2 records")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    return [
        replace(records[i], soh=records[int(perm[i])].soh, original_soh=records[i].soh)
        for i in range(len(records))
    ]
