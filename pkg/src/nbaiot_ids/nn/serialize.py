"""Versioned binary model files.

Layout (all integers little-endian)::

    offset 0   4 bytes   magic b"BSNT"
    offset 4   u16       format version (1)
    offset 6   u32       header length H
    offset 10  H bytes   UTF-8 JSON header: config, class_names, scaler, tensor table
    offset 10+H          parameter tensors as little-endian float32, in tensor-table order

The header JSON is written with sorted keys and no whitespace so identical models
produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from nbaiot_ids.errors import ModelFormatError
from nbaiot_ids.nn.model import Model, ModelConfig, param_shapes
from nbaiot_ids.preprocess import ScalerParams

MAGIC = b"BSNT"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


def model_to_bytes(model: Model) -> bytes:
    header = {
        "config": model.config.to_dict(),
        "class_names": list(model.class_names) if model.class_names is not None else None,
        "scaler": model.scaler.to_dict() if model.scaler is not None else None,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
        "dtype": "<f4",
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in model.params.values())
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + body


def model_from_bytes(blob: bytes) -> Model:
    if len(blob) < _PREFIX.size:
        raise ModelFormatError("truncated file: missing fixed header", offset=len(blob))
    magic, version, head_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise ModelFormatError(f"unsupported format version {version}", offset=4)
    start = _PREFIX.size
    if start + head_len > len(blob):
        raise ModelFormatError(f"header length {head_len} runs past end of file", offset=6)
    try:
        header = json.loads(blob[start : start + head_len].decode())
        config = ModelConfig.from_dict(header["config"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt header: {exc}", offset=start) from None

    expected = param_shapes(config)
    table = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    if table != list(expected.items()):
        raise ModelFormatError("tensor table does not match the stored config", offset=start)

    offset = start + head_len
    params: dict[str, np.ndarray] = {}
    for name, shape in table:
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(blob):
            raise ModelFormatError(f"truncated tensor {name}", offset=offset)
        params[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).astype(np.float32)
        offset += nbytes
    if offset != len(blob):
        raise ModelFormatError(f"{len(blob) - offset} trailing bytes after last tensor", offset=offset)

    scaler = ScalerParams.from_dict(header["scaler"]) if header.get("scaler") else None
    names = tuple(header["class_names"]) if header.get("class_names") else None
    return Model(config, params, scaler, names)


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> Model:
    return model_from_bytes(Path(path).read_bytes())
