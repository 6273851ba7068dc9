"""Single-file array container used for checkpoints, model files and stats.

Layout: magic, u32 format version, u64 manifest length, JSON manifest,
then the raw array payloads concatenated in manifest order.  Arrays are
stored with explicit little-endian dtypes so files re-read bit-exactly
on any host.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CVCS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIQ")

# dtypes allowed in a container; everything else must be converted first
_DTYPES = {"<f4", "<f8", "<i8", "|u1"}


class StorageError(RuntimeError):
    """Raised on unreadable, truncated or version-mismatched containers."""


def _canonical_dtype(arr: np.ndarray) -> str:
    kind = arr.dtype.kind
    if kind == "f":
        return "<f4" if arr.dtype.itemsize == 4 else "<f8"
    if kind in "iu" and arr.dtype.itemsize == 1:
        return "|u1"
    if kind == "i":
        return "<i8"
    raise StorageError(f"unsupported array dtype {arr.dtype!r}")


def save_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``meta`` (JSON-serializable) plus named arrays to ``path``.

    Output bytes are a pure function of the inputs: the manifest is
    canonical JSON and arrays are written in sorted-name order.
    """
    entries = {}
    payloads = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        code = _canonical_dtype(arr)
        data = np.ascontiguousarray(arr).astype(code, copy=False)
        entries[name] = {"dtype": code, "shape": list(arr.shape)}
        payloads.append(data.tobytes())
    manifest = json.dumps(
        {"meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    tmp = Path(path)
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)))
        fh.write(manifest)
        for blob in payloads:
            fh.write(blob)


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container back as ``(meta, arrays)``; arrays in native order."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise StorageError(f"{path}: truncated header")
    magic, version, mlen = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise StorageError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported format version {version}")
    off = _HEADER.size
    if len(raw) < off + mlen:
        raise StorageError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StorageError(f"{path}: corrupt manifest: {exc}") from exc
    off += mlen
    arrays: dict[str, np.ndarray] = {}
    for name in sorted(manifest["arrays"]):
        entry = manifest["arrays"][name]
        if entry["dtype"] not in _DTYPES:
            raise StorageError(f"{path}: illegal dtype {entry['dtype']!r}")
        dt = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if len(raw) < off + nbytes:
            raise StorageError(f"{path}: truncated payload for {name!r}")
        arrays[name] = np.frombuffer(raw, dtype=dt, count=nbytes // dt.itemsize, offset=off).reshape(shape).copy()
        off += nbytes
    return manifest["meta"], arrays
