"""Model checkpoints.

Layout (integers little-endian)::

    b"ALSM" | u32 version | u32 header length | JSON header
    | float64 parameters | [float64 Adam m | float64 Adam v]

The header holds the model config, the ``[name, shape]`` parameter order and
the Adam timestep (``null`` when no optimizer state is stored). Moment
buffers follow the parameters in the same order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import Model, ModelConfig, param_shapes
from .optim import AdamState

MAGIC = b"ALSM"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


class CheckpointError(ValueError):
    pass


def dumps(model: Model, state: AdamState | None = None) -> bytes:
    order = param_shapes(model.config)
    header = {
        "config": model.config.to_dict(),
        "params": [[name, list(shape)] for name, shape in order],
        "adam_t": None if state is None else state.t,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    chunks = [model.params[name] for name, _ in order]
    if state is not None:
        chunks += [state.m.get(name, np.zeros(shape)) for name, shape in order]
        chunks += [state.v.get(name, np.zeros(shape)) for name, shape in order]
    body = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in chunks)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + body


def loads(data: bytes) -> tuple[Model, AdamState | None]:
    if len(data) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise CheckpointError("truncated checkpoint header")
    header = json.loads(data[_PREFIX.size : start])
    config = ModelConfig.from_dict(header["config"])
    order = [(name, tuple(shape)) for name, shape in header["params"]]
    if order != param_shapes(config):
        raise CheckpointError("parameter table does not match the stored configuration")
    sizes = [int(np.prod(s)) for _, s in order]
    n_blocks = 1 if header["adam_t"] is None else 3
    expected = start + 8 * sum(sizes) * n_blocks
    if len(data) != expected:
        raise CheckpointError(f"checkpoint body truncated or padded: {len(data)} bytes, expected {expected}")
    flat = np.frombuffer(data, dtype="<f8", offset=start)
    blocks = []
    pos = 0
    for _ in range(n_blocks):
        block = {}
        for (name, shape), size in zip(order, sizes):
            block[name] = flat[pos : pos + size].reshape(shape).astype(config.dtype)
            pos += size
        blocks.append(block)
    model = Model(config, blocks[0])
    state = None if n_blocks == 1 else AdamState(m=blocks[1], v=blocks[2], t=header["adam_t"])
    return model, state


def save_checkpoint(model: Model, path: str | Path, state: AdamState | None = None) -> None:
    Path(path).write_bytes(dumps(model, state))


def load_checkpoint(path: str | Path) -> tuple[Model, AdamState | None]:
    return loads(Path(path).read_bytes())
