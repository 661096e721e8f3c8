"""Versioned binary container for trained model state.

Layout (little-endian throughout):

    bytes 0..7   magic  b"CONDMON\\x01"
    bytes 8..15  uint64 header length in bytes
    header       UTF-8 JSON: {"kind", "version", "meta",
                              "arrays": [{"name", "shape", "dtype"}, ...]}
    payload      each array's raw C-order bytes, in header order

Round trips are bit-exact: arrays are stored as their raw buffers.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CONDMON\x01"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """The file is not a valid model container (corrupt, wrong kind/version/shape)."""


def save_blob(path: Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    specs = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        specs.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str})
        chunks.append(arr.tobytes())
    header = json.dumps(
        {"kind": kind, "version": FORMAT_VERSION, "meta": meta, "arrays": specs},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_blob(
    path: Path, expected_kind: str | None = None
) -> tuple[str, dict, dict[str, np.ndarray]]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: not a condmon model file")
    (header_len,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if start + header_len > len(raw):
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupted header ({exc})") from None
    if header.get("version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported format version {header.get('version')!r}"
        )
    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise ModelFormatError(f"{path}: expected a {expected_kind!r} file, got {kind!r}")
    arrays = {}
    offset = start + header_len
    for spec in header.get("arrays", []):
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise ModelFormatError(f"{path}: array {spec['name']!r} truncated")
        arrays[spec["name"]] = np.frombuffer(
            raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)), offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise ModelFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return kind, header.get("meta", {}), arrays
