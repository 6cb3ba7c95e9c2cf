"""Named-tensor binary container (TRLW format).

Layout, all integers little-endian:
  magic "TRLW" | u32 version=1 | u32 tensor_count
  per tensor: u32 name_len | name UTF-8 | u8 dtype (0=float32) | u8 ndim
              | ndim x u32 dims | float32 payload, row-major
No padding between records.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError, WeightFormatError, WeightLengthError

MAGIC = b"TRLW"
VERSION = 1
DTYPE_FLOAT32 = 0


@dataclass
class WeightContainer:
    """Ordered name -> float32 ndarray mapping plus a format version."""

    version: int = VERSION
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[str, np.ndarray] = {}
        for name, arr in self.tensors.items():
            if name in clean:
                raise ValidationError(f"duplicate tensor name {name!r}")
            clean[name] = np.ascontiguousarray(arr, dtype=np.float32)
        self.tensors = clean

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise WeightLengthError(
            f"truncated container: wanted {n} bytes for {what}, got {len(data)}"
        )
    return data


def read_container(fh) -> WeightContainer:
    magic = _read_exact(fh, 4, "magic")
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
    if version != VERSION:
        raise WeightFormatError(f"unsupported container version {version}")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(fh, 4, f"tensor {i} name length"))
        try:
            name = _read_exact(fh, name_len, f"tensor {i} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"tensor {i} name is not UTF-8") from exc
        dtype, ndim = struct.unpack("<BB", _read_exact(fh, 2, f"{name}: dtype/ndim"))
        if dtype != DTYPE_FLOAT32:
            raise WeightFormatError(f"{name}: unsupported dtype code {dtype}")
        dims = struct.unpack(
            f"<{ndim}I", _read_exact(fh, 4 * ndim, f"{name}: dims")
        )
        n_items = 1
        for d in dims:
            n_items *= d
        payload = _read_exact(fh, 4 * n_items, f"{name}: payload")
        if name in tensors:
            raise ValidationError(f"duplicate tensor name {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
    trailing = fh.read(1)
    if trailing:
        raise WeightFormatError("trailing bytes after last tensor record")
    return WeightContainer(version=version, tensors=tensors)


def write_container(container: WeightContainer, fh) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", container.version, len(container.tensors)))
    for name, arr in container.tensors.items():
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<BB", DTYPE_FLOAT32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str | Path) -> WeightContainer:
    """Parse a TRLW file; byte-exact round-trip with :func:`save_weights`."""
    with Path(path).open("rb") as fh:
        return read_container(fh)


def save_weights(container: WeightContainer, path: str | Path) -> None:
    buf = io.BytesIO()
    write_container(container, buf)
    Path(path).write_bytes(buf.getvalue())
