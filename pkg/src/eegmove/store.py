"""Binary feature store.

Layout (all integers little-endian)::

    b"EEGF" | u32 version | u32 header length | JSON header | float32[n * steps * width]

The JSON header carries ``dims`` ``[n, steps, width]``, free-form ``meta`` and
an ``index`` list with one ``{subject, trial, label, offset}`` entry per row.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import FeatureDataset

MAGIC = b"EEGF"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


class StoreError(ValueError):
    pass


def dumps(ds: FeatureDataset) -> bytes:
    n, steps, width = ds.X.shape
    header = {
        "dims": [n, steps, width],
        "meta": ds.meta,
        "index": [
            {"subject": int(s), "trial": t, "label": int(y), "offset": float(o)}
            for s, t, y, o in zip(ds.subjects, ds.trial_ids, ds.y, ds.offsets)
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + np.ascontiguousarray(ds.X, dtype="<f4").tobytes()


def loads(data: bytes) -> FeatureDataset:
    if len(data) < _PREFIX.size:
        raise StoreError("truncated feature store prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise StoreError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version > VERSION:
        raise StoreError(f"feature store version {version} is newer than supported {VERSION}")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise StoreError("truncated feature store header")
    header = json.loads(data[_PREFIX.size : start])
    n, steps, width = header["dims"]
    count = n * steps * width
    if len(data) != start + 4 * count:
        raise StoreError(f"feature store body has {len(data) - start} bytes, expected {4 * count}")
    X = np.frombuffer(data, dtype="<f4", count=count, offset=start).reshape(n, steps, width)
    index = header["index"]
    return FeatureDataset(
        X=X.astype(np.float64),
        y=np.array([r["label"] for r in index], dtype=np.int64),
        subjects=np.array([r["subject"] for r in index], dtype=np.int64),
        trial_ids=[r["trial"] for r in index],
        offsets=np.array([r["offset"] for r in index], dtype=np.float64),
        meta=header["meta"],
    )


def save(ds: FeatureDataset, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ds))


def load(path: str | Path) -> FeatureDataset:
    return loads(Path(path).read_bytes())
