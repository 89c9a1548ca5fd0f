"""Flat binary parameter checkpoints.

Layout (little-endian):
  magic "NARP" | version u32 | param count u32
  per parameter: name length u16 | name utf-8 | rank u8 | dims u32... | f32 values
"""

import struct

import numpy as np

MAGIC = b"NARP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(path, params):
    """Write dict name -> float32 ndarray (or Tensor) to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, value in params.items():
            arr = np.ascontiguousarray(getattr(value, "data", value),
                                       dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path):
    """Read a checkpoint back into dict name -> float32 ndarray."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic")
        version, count = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(dims)
            params[name] = data.astype(np.float32)
        return params
