"""Benchmark splits: cell-disjoint derivation-closed primary split, record-level
optimistic baseline, and the leakage audit.

The primary strategy (by_cell_primary) keeps every physical cell's rows in one
subset and every anomaly child with its clean parent. Rows without a cell
(Regime-B) are grouped into pseudo-cells keyed by nearest anchor so each
anchor's rows stay together. The optimistic strategy (by_record_optimistic_
baseline) assigns rows uniformly at random, ignoring cells and parentage; it
exists so its leakage can be measured, not for benchmark reporting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BY_CELL_PRIMARY = "by_cell_primary"
BY_RECORD_OPTIMISTIC = "by_record_optimistic_baseline"
STRATEGIES = (BY_CELL_PRIMARY, BY_RECORD_OPTIMISTIC)
SUBSETS = ("train", "val", "test")
DEFAULT_RATIOS = (0.667, 0.159, 0.174)


@dataclass(frozen=True)
class SplitAssignment:
    """Named partition of sample_ids into train/val/test."""

    name: str
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def subsets(self) -> dict[str, tuple[str, ...]]:
        return {"train": self.train, "val": self.val, "test": self.test}

    def subset_of(self) -> dict[str, str]:
        out = {}
        for name, ids in self.subsets().items():
            for sid in ids:
                out[sid] = name
        return out

    def to_json(self) -> str:
        payload = {"name": self.name, "train": list(self.train), "val": list(self.val), "test": list(self.test)}
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitAssignment":
        payload = json.loads(text)
        return cls(
            name=payload["name"],
            train=tuple(payload["train"]),
            val=tuple(payload["val"]),
            test=tuple(payload["test"]),
        )


def save_split(split: SplitAssignment, path) -> None:
    Path(path).write_text(split.to_json(), encoding="utf-8")


def load_split(path) -> SplitAssignment:
    return SplitAssignment.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class LeakageReport:
    cells_in_multiple_subsets: int
    cross_split_parent_child_pairs: int
    sample_id_overlap: int

    @property
    def clean(self) -> bool:
        return (
            self.cells_in_multiple_subsets == 0
            and self.cross_split_parent_child_pairs == 0
            and self.sample_id_overlap == 0
        )

    def to_json(self) -> str:
        payload = {
            "cells_in_multiple_subsets": self.cells_in_multiple_subsets,
            "cross_split_parent_child_pairs": self.cross_split_parent_child_pairs,
            "sample_id_overlap": self.sample_id_overlap,
            "clean": self.clean,
        }
        return json.dumps(payload, indent=2) + "\n"


def group_key(row: dict) -> str:
    """Cell id when present, else a pseudo-cell keyed by nearest anchor."""
    if row.get("cell_id"):
        return row["cell_id"]
    return f"anchor:{row['nearest_anchor']:g}"


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios):.6f}")
    return ratios


def build_split(rows, strategy: str, ratios=DEFAULT_RATIOS, seed: int = 0) -> SplitAssignment:
    """Partition dataset rows into train/val/test under the chosen strategy."""
    ratios = _check_ratios(ratios)
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown split strategy {strategy!r}")
    if not rows:
        raise ValueError("no rows to split")
    ids = [row["sample_id"] for row in rows]
    rng = np.random.default_rng(seed)

    if strategy == BY_RECORD_OPTIMISTIC:
        order = rng.permutation(len(ids))
        n_train = int(round(ratios[0] * len(ids)))
        n_val = int(round(ratios[1] * len(ids)))
        shuffled = [ids[i] for i in order]
        return SplitAssignment(
            name=BY_RECORD_OPTIMISTIC,
            train=tuple(shuffled[:n_train]),
            val=tuple(shuffled[n_train : n_train + n_val]),
            test=tuple(shuffled[n_train + n_val :]),
        )

    # by_cell_primary: greedy largest-deficit packing of whole groups
    groups: dict[str, list[str]] = {}
    for row in rows:
        groups.setdefault(group_key(row), []).append(row["sample_id"])
    if not groups:
        raise ValueError("dataset has no assignable groups")
    names = sorted(groups)
    order = rng.permutation(len(names))
    targets = np.array(ratios) * len(ids)
    assigned = np.zeros(3)
    buckets: tuple[list[str], ...] = ([], [], [])
    for gi in order:
        members = groups[names[gi]]
        deficit = targets - assigned
        sub = int(np.argmax(deficit))  # argmax takes the first subset on ties
        buckets[sub].extend(members)
        assigned[sub] += len(members)
    return SplitAssignment(
        name=BY_CELL_PRIMARY,
        train=tuple(buckets[0]),
        val=tuple(buckets[1]),
        test=tuple(buckets[2]),
    )


def audit_split(rows, split: SplitAssignment) -> LeakageReport:
    """Brute-force leakage counts over cells, parent-child edges, and sample ids."""
    known = {row["sample_id"] for row in rows}
    subset_of: dict[str, str] = {}
    overlap = 0
    for name, subset_ids in split.subsets().items():
        for sid in subset_ids:
            if sid not in known:
                raise ValueError(f"split references unknown sample_id {sid!r}")
            if sid in subset_of and subset_of[sid] != name:
                overlap += 1
            subset_of[sid] = name

    cell_subsets: dict[str, set[str]] = {}
    for row in rows:
        if not row.get("cell_id"):
            continue
        sub = subset_of.get(row["sample_id"])
        if sub is not None:
            cell_subsets.setdefault(row["cell_id"], set()).add(sub)
    multi_cells = sum(1 for subs in cell_subsets.values() if len(subs) > 1)

    cross_pairs = 0
    for row in rows:
        parent = row.get("parent_sample_id")
        if not parent:
            continue
        child_sub = subset_of.get(row["sample_id"])
        parent_sub = subset_of.get(parent)
        if child_sub is not None and parent_sub is not None and child_sub != parent_sub:
            cross_pairs += 1

    return LeakageReport(
        cells_in_multiple_subsets=multi_cells,
        cross_split_parent_child_pairs=cross_pairs,
        sample_id_overlap=overlap,
    )
