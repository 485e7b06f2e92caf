"""Binary checkpoint format.

Layout: magic "FLXM1", a uint32 little-endian header length, a UTF-8 JSON
header listing (name, dtype, shape, byte offset, frozen) per tensor, then
raw little-endian tensor data in header order. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"FLXM1"
_DTYPES = {"f32": "<f4", "f64": "<f8"}


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(params: ParamStore, path, dtype: str = "f32",
                    meta: dict | None = None) -> None:
    """Write `params` to `path`. Training math is 64-bit; storage defaults
    to 32-bit per the artifact's precision policy."""
    if dtype not in _DTYPES:
        raise CheckpointError(f"unsupported dtype '{dtype}'")
    np_dtype = np.dtype(_DTYPES[dtype])
    entries = []
    blobs = []
    offset = 0
    for name, value in params.items():
        raw = np.ascontiguousarray(value, dtype=np_dtype).tobytes()
        entries.append({
            "name": name,
            "dtype": dtype,
            "shape": list(value.shape),
            "offset": offset,
            "frozen": params.is_frozen(name),
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"tensors": entries, "meta": meta or {}},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:5] != MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    (hlen,) = struct.unpack("<I", data[5:9])
    header = json.loads(data[9:9 + hlen].decode("utf-8"))
    body = data[9 + hlen:]
    params = ParamStore()
    for ent in header["tensors"]:
        np_dtype = np.dtype(_DTYPES[ent["dtype"]])
        shape = tuple(ent["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = ent["offset"]
        end = start + count * np_dtype.itemsize
        if end > len(body):
            raise CheckpointError(f"truncated tensor data for '{ent['name']}'")
        arr = np.frombuffer(body[start:end], dtype=np_dtype).reshape(shape)
        params.add(ent["name"], arr.astype(np.float64), frozen=ent["frozen"])
    return params, header.get("meta", {})
