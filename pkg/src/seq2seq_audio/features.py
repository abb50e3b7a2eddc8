"""Feature tables: extraction from checkpoints, fusion and CSV storage."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model
from .autoencoder import ConfigError
from .dsp import CLIP_THRESHOLDS, Spectrogram
from .numerics import Checkpoint
from .numerics.autodiff import no_grad


@dataclass(frozen=True)
class Segment:
    source: str             # checkpoint id or file the columns came from
    tap: str
    config: dict
    start: int
    stop: int


@dataclass
class FeatureTable:
    instance_ids: list[str]
    vectors: np.ndarray                 # (N, D) float32
    provenance: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32).reshape(len(self.instance_ids), -1)
        if len(set(self.instance_ids)) != len(self.instance_ids):
            raise ValueError("duplicate instance ids in feature table")
        spans = [(s.start, s.stop) for s in self.provenance]
        if spans:
            pos = 0
            for lo, hi in spans:
                if lo != pos or hi < lo:
                    raise ValueError("provenance spans do not partition the columns")
                pos = hi
            if pos != self.dim:
                raise ValueError("provenance spans do not cover every column")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.instance_ids)

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        """Vectors for ``ids`` in the given order."""
        index = {iid: k for k, iid in enumerate(self.instance_ids)}
        try:
            return self.vectors[[index[i] for i in ids]]
        except KeyError as exc:
            raise KeyError(f"instance {exc.args[0]!r} missing from feature table") from None


# ---------------------------------------------------------------------------
# extraction


def _features_one(params, spec, frames: np.ndarray, tap: str) -> np.ndarray:
    with no_grad():
        return model.batch_features(params, spec, frames[None], [frames.shape[0]], tap)[0]


def _worker(args):
    ckpt_bytes, frames_list, tap = args
    spec, params = model.params_from_checkpoint(Checkpoint.from_bytes(ckpt_bytes))
    return [_features_one(params, spec, f, tap) for f in frames_list]


def extract_features(checkpoint: Checkpoint, spectrograms: Sequence[Spectrogram], tap: str | None = None,
                     *, source: str | None = None, jobs: int = 1) -> FeatureTable:
    """One feature row per spectrogram, order preserved.

    Instances are encoded one at a time, so a row depends only on the
    checkpoint and its own spectrogram.
    """
    spec, params = model.params_from_checkpoint(checkpoint)
    tap = tap or model.default_tap(spec)
    dim = model.tap_dim(spec, tap)
    configs = []
    for s in spectrograms:
        if s.frames.shape[1] != spec.n_mels:
            raise ConfigError(f"{s.instance_id}: {s.frames.shape[1]} mel bands, checkpoint expects {spec.n_mels}")
        configs.append(s.config)
    frames = [np.asarray(s.frames, dtype=np.float32) for s in spectrograms]
    if jobs > 1 and len(frames) > 1:
        chunks = [frames[k::jobs] for k in range(jobs)]
        blob = checkpoint.to_bytes()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_worker, [(blob, c, tap) for c in chunks]))
        rows = [None] * len(frames)
        for k, part in enumerate(parts):
            rows[k::jobs] = part
    else:
        rows = [_features_one(params, spec, f, tap) for f in frames]
    vectors = np.stack(rows).astype(np.float32) if rows else np.zeros((0, dim), np.float32)
    cfg = asdict(configs[0]) if configs else {}
    seg = Segment(source or f"{checkpoint.name}", tap, cfg, 0, dim)
    return FeatureTable([s.instance_id for s in spectrograms], vectors, [seg])


# ---------------------------------------------------------------------------
# fusion


def fuse_tables(tables: Sequence[FeatureTable]) -> FeatureTable:
    """Column-wise concatenation in argument order (early fusion)."""
    if not tables:
        raise ValueError("nothing to fuse")
    ids = tables[0].instance_ids
    for t in tables[1:]:
        if t.instance_ids != ids:
            raise ValueError("feature tables must list the same instances in the same order")
    segments, offset = [], 0
    for t in tables:
        for s in t.provenance or [Segment("unknown", "unknown", {}, 0, t.dim)]:
            segments.append(Segment(s.source, s.tap, s.config, s.start + offset, s.stop + offset))
        offset += t.dim
    return FeatureTable(list(ids), np.concatenate([t.vectors for t in tables], axis=1), segments)


def fuse_clip_variants(tables_by_threshold: dict[float, FeatureTable]) -> FeatureTable:
    """Fuse clip-threshold variants in ascending threshold order (-70, -60, -50, -40)."""
    unknown = set(tables_by_threshold) - set(CLIP_THRESHOLDS)
    if unknown:
        raise ValueError(f"unexpected clip thresholds {sorted(unknown)}")
    return fuse_tables([tables_by_threshold[k] for k in sorted(tables_by_threshold)])


# ---------------------------------------------------------------------------
# storage


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_feature_csv(table: FeatureTable, path) -> Path:
    """``instance_id,f0..f{D-1}`` with shortest round-trip float32 text, plus JSON provenance."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id"] + [f"f{k}" for k in range(table.dim)])
        for iid, row in zip(table.instance_ids, table.vectors):
            writer.writerow([iid] + [str(v) for v in row])
    meta = {"dim": table.dim, "segments": [asdict(s) for s in table.provenance]}
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))
    return path


def read_feature_csv(path) -> FeatureTable:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "instance_id":
            raise ValueError(f"{path}: first column must be instance_id")
        ids, rows = [], []
        for rec in reader:
            ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    dim = len(header) - 1
    vectors = np.array(rows, dtype=np.float32).reshape(len(ids), dim)
    segments = []
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        segments = [Segment(**s) for s in meta.get("segments", [])]
    if not segments:
        segments = [Segment(path.name, "unknown", {}, 0, dim)]
    return FeatureTable(ids, vectors, segments)
