"""Atomic file writes and SHA-256 checksum helpers."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

CHECKSUM_FILENAME = "SHA256SUMS"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_checksums(root) -> Path:
    """Write SHA256SUMS covering every file under root (sorted relative paths)."""
    root = Path(root)
    lines = []
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.name == CHECKSUM_FILENAME:
            continue
        rel = path.relative_to(root).as_posix()
        lines.append(f"{sha256_file(path)}  {rel}\n")
    out = root / CHECKSUM_FILENAME
    atomic_write_text(out, "".join(lines))
    return out


def verify_checksums(root) -> list[str]:
    """Return a list of mismatch/missing descriptions; empty means clean."""
    root = Path(root)
    sums = root / CHECKSUM_FILENAME
    if not sums.is_file():
        return [f"missing {CHECKSUM_FILENAME}"]
    problems = []
    with open(sums, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                digest, rel = line.split("  ", 1)
            except ValueError:
                problems.append(f"malformed line: {line!r}")
                continue
            target = root / rel
            if not target.is_file():
                problems.append(f"missing file: {rel}")
            elif sha256_file(target) != digest:
                problems.append(f"checksum mismatch: {rel}")
    return problems
