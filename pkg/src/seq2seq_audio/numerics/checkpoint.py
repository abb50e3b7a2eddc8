"""Binary checkpoint container.

Layout (little-endian)::

    b"S2SC1"
    u32 header length, header bytes   canonical JSON {"spec": ..., "state": ...}
    u32 epoch
    u64 seed
    u32 array count
    per array: u32 name length, name (utf-8), u32 ndim, ndim * u32 dims,
               prod(dims) float32 values, row-major

Parameters are stored as float32, so a save/load round trip is bit-exact for
models trained at 32-bit. Optimizer moments ride along as ``opt/m/<name>`` and
``opt/v/<name>`` arrays so training can resume exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"S2SC1"


class CheckpointFormatError(ValueError):
    pass


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class Checkpoint:
    spec: dict
    params: dict[str, np.ndarray]
    epoch: int = 0
    seed: int = 0
    state: dict = field(default_factory=dict)
    opt_m: dict[str, np.ndarray] = field(default_factory=dict)
    opt_v: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"e{self.epoch}"

    def to_bytes(self) -> bytes:
        arrays = dict(self.params)
        arrays.update({f"opt/m/{k}": v for k, v in self.opt_m.items()})
        arrays.update({f"opt/v/{k}": v for k, v in self.opt_v.items()})
        header = canonical_json({"spec": self.spec, "state": self.state})
        parts = [MAGIC, struct.pack("<I", len(header)), header,
                 struct.pack("<IQI", self.epoch, self.seed, len(arrays))]
        for name, arr in arrays.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            parts.append(struct.pack("<I", len(raw)) + raw)
            parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
            parts.append(arr.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[:5] != MAGIC:
            raise CheckpointFormatError("not a checkpoint file (bad magic)")
        pos = 5

        def take(fmt):
            nonlocal pos
            size = struct.calcsize(fmt)
            if pos + size > len(data):
                raise CheckpointFormatError("truncated checkpoint")
            out = struct.unpack_from(fmt, data, pos)
            pos += size
            return out

        (hlen,) = take("<I")
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
        pos += hlen
        epoch, seed, count = take("<IQI")
        params, opt_m, opt_v = {}, {}, {}
        for _ in range(count):
            (nlen,) = take("<I")
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = take("<I")
            shape = take(f"<{ndim}I")
            n = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * n > len(data):
                raise CheckpointFormatError("truncated checkpoint")
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * n
            if name.startswith("opt/m/"):
                opt_m[name[6:]] = arr
            elif name.startswith("opt/v/"):
                opt_v[name[6:]] = arr
            else:
                params[name] = arr
        return cls(spec=header["spec"], params=params, epoch=epoch, seed=seed,
                   state=header.get("state", {}), opt_m=opt_m, opt_v=opt_v)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
