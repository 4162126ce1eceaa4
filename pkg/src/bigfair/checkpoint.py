"""Binary checkpoint format with a bit-exact round trip.

Layout, all integers little-endian:

    8 bytes   magic b"BFCHKPT1"
    u32       format version (1)
    u32       config block byte length
    bytes     config block: utf-8 "key=value" lines, one per ModelConfig field
    u32       parameter count
    per parameter:
        u16       name byte length
        bytes     name (utf-8)
        u8        ndim
        u32*ndim  dimension extents
        f64*prod  values, little-endian, row-major

Values are written straight from the float64 arrays, so save -> load is
exact to the bit.
"""

from __future__ import annotations

import struct

import numpy as np

from . import autodiff as ad
from .model import ModelConfig, ModelParams, config_from_dict, config_to_dict

MAGIC = b"BFCHKPT1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: ModelParams, path) -> None:
    cfg_lines = "".join(
        f"{key}={value}\n" for key, value in config_to_dict(params.cfg).items()
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg_lines)))
        fh.write(cfg_lines)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            arr = tensor.data
            fh.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    offset = 0

    def need(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(f"{path}: truncated at byte {offset}")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    if bytes(need(8)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a checkpoint file")
    (version,) = struct.unpack("<I", need(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (cfg_len,) = struct.unpack("<I", need(4))
    cfg_dict = {}
    for line in bytes(need(cfg_len)).decode("utf-8").splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"{path}: malformed config line {line!r}")
        cfg_dict[key] = value
    cfg = config_from_dict(cfg_dict)

    (count,) = struct.unpack("<I", need(4))
    tensors: dict[str, ad.Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2))
        name = bytes(need(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", need(1))
        shape = tuple(struct.unpack("<I", need(4))[0] for _ in range(ndim))
        n_values = int(np.prod(shape)) if shape else 1
        raw = need(8 * n_values)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        tensors[name] = ad.parameter(arr)
    if offset != len(view):
        raise CheckpointError(f"{path}: {len(view) - offset} trailing bytes")
    return ModelParams(cfg, tensors)
