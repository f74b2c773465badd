"""Binary parameter checkpoints.

Layout (all integers little-endian):
  magic ``NDCK`` | u16 version | u32 x5 encoder spec fields
  | u32 tensor count | per tensor: u16 name length, name utf-8,
  u8 ndim, u32 dims, values as float64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ndarchive.errors import InvalidInputError
from ndarchive.neuralcore.autodiff import Tensor, parameter
from ndarchive.neuralcore.encoder import EncoderSpec

MAGIC = b"NDCK"
VERSION = 1


def save_checkpoint(path: str | Path, spec: EncoderSpec, params: dict[str, Tensor]) -> None:
    chunks = [
        MAGIC,
        struct.pack(
            "<HIIIII",
            VERSION,
            spec.input_size,
            spec.hidden_dim,
            spec.repr_dim,
            spec.proj_dim,
            spec.patch_size,
        ),
        struct.pack("<I", len(params)),
    ]
    for name, p in params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", p.values.ndim))
        chunks.append(struct.pack(f"<{p.values.ndim}I", *p.values.shape))
        chunks.append(p.values.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[EncoderSpec, dict[str, Tensor]]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise InvalidInputError(f"{path}: not a parameter checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != VERSION:
            raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
        fields = struct.unpack_from("<IIIII", blob, 6)
        spec = EncoderSpec(*[int(v) for v in fields])
        offset = 6 + 20
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        params: dict[str, Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            values = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape)
            offset += 8 * size
            params[name] = parameter(values)
    except (struct.error, ValueError) as exc:
        raise InvalidInputError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    return spec, params
