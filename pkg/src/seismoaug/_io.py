"""On-disk formats.

Arrays are raw little-endian float32, row-major, with a JSON sidecar holding
dims and provenance.  Weight files are a single file: a text index (one line
per tensor: name, dtype, shape, byte offset) terminated by ``END``, followed
by the concatenated raw float32 payload.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping

import numpy as np

WEIGHTS_MAGIC = "SEISMOAUG-WEIGHTS 1"
_LE_F32 = np.dtype("<f4")


class WeightFileError(ValueError):
    """Base class for malformed weight files."""


class TruncatedWeightFile(WeightFileError):
    pass


class MissingLayerError(WeightFileError, KeyError):
    pass


class ShapeMismatchError(WeightFileError):
    pass


def write_f32(path: str | Path, array: np.ndarray, meta: Mapping | None = None) -> Path:
    """Write ``array`` as raw float32 LE plus ``<stem>.meta`` JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(array, dtype=_LE_F32, order="C")
    path.write_bytes(data.tobytes())
    sidecar = {"shape": list(data.shape), "dtype": "float32-le"}
    sidecar.update(meta or {})
    path.with_suffix(".meta").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return path


def read_meta(path: str | Path) -> dict:
    return json.loads(Path(path).with_suffix(".meta").read_text())


def read_f32(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = read_meta(path)
    shape = tuple(meta["shape"])
    raw = np.fromfile(path, dtype=_LE_F32)
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {raw.size}")
    return raw.reshape(shape).astype(np.float32), meta


def save_weights(path: str | Path, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [WEIGHTS_MAGIC]
    chunks = []
    offset = 0
    for name, value in tensors.items():
        arr = np.asarray(value, dtype=_LE_F32, order="C")
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"{name} float32 {shape or '-'} {offset}")
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for chunk in chunks:
            fh.write(chunk)
    return path


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    """Read a weight file written by :func:`save_weights`."""
    blob = Path(path).read_bytes()
    if not blob:
        raise TruncatedWeightFile(f"{path}: empty weight file")
    end = blob.find(b"\nEND\n")
    if end < 0:
        raise TruncatedWeightFile(f"{path}: index not terminated")
    header = blob[:end].decode("ascii").split("\n")
    if header[0] != WEIGHTS_MAGIC:
        raise WeightFileError(f"{path}: bad magic {header[0]!r}")
    payload = blob[end + len(b"\nEND\n"):]
    out = {}
    for line in header[1:]:
        name, dtype, shape_s, offset_s = line.split()
        if dtype != "float32":
            raise WeightFileError(f"{path}: unsupported dtype {dtype} for {name}")
        shape = () if shape_s == "-" else tuple(int(s) for s in shape_s.split(","))
        offset = int(offset_s)
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(payload):
            raise TruncatedWeightFile(f"{path}: payload truncated at tensor {name}")
        out[name] = np.frombuffer(payload, dtype=_LE_F32, count=int(np.prod(shape)),
                                  offset=offset).reshape(shape).astype(np.float32)
    return out


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
