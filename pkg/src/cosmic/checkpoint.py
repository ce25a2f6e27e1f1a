"""Versioned binary model checkpoints.

Layout: 8-byte magic, little-endian uint32 JSON header length, the UTF-8
JSON header (shapes, dtype, seed, episode), then the raw C-order bytes of
the encoder weights, head weights, and head bias in that order. The header
is serialized with sorted keys and no whitespace so identical runs produce
identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .encoder import ModelParams
from .errors import CheckpointError

MAGIC = b"COSMICK1"


def save_checkpoint(path, params: ModelParams, seed: int, episode: int) -> None:
    header = {
        "dtype": str(params.w.dtype),
        "episode": int(episode),
        "head_b_shape": list(params.head_b.shape),
        "head_w_shape": list(params.head_w.shape),
        "seed": int(seed),
        "w_shape": list(params.w.shape),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in (params.w, params.head_w, params.head_b):
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, header dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a recognized checkpoint file")
        raw = fh.read(4)
        if len(raw) != 4:
            raise CheckpointError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw)
        try:
            header = json.loads(fh.read(hlen).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: bad header: {exc}") from None
        try:
            dtype = np.dtype(header["dtype"])
            shapes = [tuple(header[key]) for key in
                      ("w_shape", "head_w_shape", "head_b_shape")]
        except KeyError as exc:
            raise CheckpointError(f"{path}: header missing {exc}") from None
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated array data")
            arrays.append(np.frombuffer(buf, dtype=dtype).reshape(shape).copy())
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after arrays")
    params = ModelParams(w=arrays[0], head_w=arrays[1], head_b=arrays[2])
    return params, header
