"""Binary checkpoint format.

Layout (little-endian)::

    b"INQM"  u16 version
    u32 n    n bytes of UTF-8 JSON (model config, input sizes, provenance)
    u32 count
    count records: u16 name_len, name, u8 ndim, ndim*u32 shape, float64 data
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FeatureIOError, VersionMismatch
from .model import InQSSModel, ModelConfig

MAGIC = b"INQM"
VERSION = 1


def save_checkpoint(model: InQSSModel, path, meta=None):
    header = {
        "model": model.config.to_dict(),
        "spec_bins": model.spec_bins,
        "scat_paths": model.scat_paths,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    params = model.parameters()
    parts = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(blob)), blob,
             struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Returns ``(model, meta)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10:
        raise FeatureIOError(f"{path}: truncated checkpoint")
    if blob[:4] != MAGIC:
        raise VersionMismatch(f"{path}: not a checkpoint (magic {blob[:4]!r})")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {VERSION}")
    (n,) = struct.unpack_from("<I", blob, 6)
    header = json.loads(blob[10:10 + n].decode("utf-8"))
    pos = 10 + n
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    model = InQSSModel(ModelConfig.from_dict(header["model"]), header["spec_bins"], header["scat_paths"])
    params = model.parameters()
    seen = set()
    for _ in range(count):
        (klen,) = struct.unpack_from("<H", blob, pos)
        name = blob[pos + 2:pos + 2 + klen].decode("utf-8")
        pos += 2 + klen
        (ndim,) = struct.unpack_from("<B", blob, pos)
        shape = struct.unpack_from(f"<{ndim}I", blob, pos + 1)
        pos += 1 + 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        if name not in params or params[name].shape != tuple(shape):
            raise VersionMismatch(f"{path}: unexpected parameter {name} {shape}")
        params[name][...] = data
        seen.add(name)
    if seen != set(params):
        raise VersionMismatch(f"{path}: missing parameters {sorted(set(params) - seen)}")
    return model, header["meta"]
