"""Self-describing model checkpoint files.

Layout: 8-byte magic, little-endian uint32 header length, JSON header, then
one raw little-endian float32 block per parameter in declaration order. The
header records the model kind, conditioning mode, architecture config, seed,
step count, a loss-curve tail, and the name/shape of every block, so a file
can be inspected and validated without the model class.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from hrrplab.nn.autodiff import Tensor

MAGIC = b"HRRPCKP1"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Raised for malformed, truncated, or incompatible checkpoint files."""


def save_checkpoint(path: str | Path, model_kind: str,
                    named_params: Sequence[tuple[str, Tensor]],
                    config: dict, seed: int, step: int,
                    loss_tail: Sequence[float] = (),
                    extra: dict | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "model": model_kind,
        "config": config,
        "seed": int(seed),
        "step": int(step),
        "loss_tail": [float(v) for v in loss_tail],
        "params": [{"name": n, "shape": list(t.data.shape)}
                   for n, t in named_params],
    }
    header.update(extra or {})
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in named_params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    """Read a checkpoint; returns (header, float64 parameter arrays)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"malformed checkpoint header: {path}")
    (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    body = len(MAGIC) + 4
    if len(raw) < body + hlen:
        raise CheckpointError(f"truncated checkpoint header: {path}")
    try:
        header = json.loads(raw[body:body + hlen])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint header: {path}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {header.get('format_version')}")
    offset = body + hlen
    arrays: list[np.ndarray] = []
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        block = raw[offset:offset + nbytes]
        if len(block) != nbytes:
            raise CheckpointError(f"truncated parameter payload: {path}")
        arrays.append(np.frombuffer(block, dtype="<f4").reshape(shape)
                      .astype(np.float64))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"trailing bytes after parameter payload: {path}")
    return header, arrays


def restore_parameters(named_params: Sequence[tuple[str, Tensor]],
                       header: dict, arrays: Sequence[np.ndarray]) -> None:
    """Copy loaded arrays into live parameters, validating names and shapes."""
    specs = header["params"]
    if len(specs) != len(named_params):
        raise CheckpointError("parameter count mismatch")
    for (name, tensor), spec, arr in zip(named_params, specs, arrays):
        if spec["name"] != name or tuple(spec["shape"]) != tensor.data.shape:
            raise CheckpointError(
                f"parameter mismatch: file has {spec['name']}{spec['shape']}, "
                f"model expects {name}{list(tensor.data.shape)}")
        tensor.data[...] = arr
