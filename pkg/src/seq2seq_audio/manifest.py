"""Dataset manifests: CSV ``instance_id,wav_path,partition,label``."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

PARTITIONS = ("train", "devel", "test")
HEADER = ["instance_id", "wav_path", "partition", "label"]


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    instance_id: str
    wav_path: str
    partition: str
    label: float | None = None


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"instance_id", "wav_path", "partition"} - set(reader.fieldnames or [])
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            part = (rec["partition"] or "").strip()
            if part not in PARTITIONS:
                raise ManifestError(f"{path}:{lineno}: partition {part!r} not in {PARTITIONS}")
            raw = (rec.get("label") or "").strip()
            try:
                label = float(raw) if raw else None
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: label {raw!r} is not a number") from None
            if label is not None and not (math.isfinite(label) and 1.0 <= label <= 9.0):
                raise ManifestError(f"{path}:{lineno}: label {label} outside [1, 9]")
            rows.append(ManifestRow(rec["instance_id"].strip(), rec["wav_path"].strip(), part, label))
    ids = [r.instance_id for r in rows]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ManifestError(f"{path}: duplicate instance ids {dup[:5]}")
    return rows


def write_manifest(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for r in rows:
            writer.writerow([r.instance_id, r.wav_path, r.partition,
                             "" if r.label is None else repr(float(r.label))])
    return path


def resolve_wav(row: ManifestRow, manifest_path) -> Path:
    p = Path(row.wav_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def labels_for(rows, partition: str) -> dict[str, float]:
    out = {}
    for r in rows:
        if r.partition == partition:
            if r.label is None:
                raise ManifestError(f"instance {r.instance_id!r} has no label")
            out[r.instance_id] = r.label
    return out
