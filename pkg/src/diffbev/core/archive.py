"""DBT1 tensor archive codec.

Layout (little-endian):
    magic "DBT1", u32 entry count, then per entry:
    u16 name length, UTF-8 name, u8 dtype code, u8 rank, rank × u32 dims,
    row-major payload.

Dtype codes: 0 = f32 (tensors), 1 = u8 (byte blobs such as config text).
Entry order is preserved, so encoding the decoded mapping reproduces the
original bytes.
"""

from __future__ import annotations

import struct
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ArchiveError

MAGIC = b"DBT1"

DTYPE_F32 = 0
DTYPE_U8 = 1

_DTYPES: dict[int, np.dtype[Any]] = {
    DTYPE_F32: np.dtype("<f4"),
    DTYPE_U8: np.dtype("u1"),
}


def _dtype_code(array: npt.NDArray[Any]) -> int:
    if array.dtype.kind == "f":
        return DTYPE_F32
    if array.dtype.kind in "bu" and array.dtype.itemsize == 1:
        return DTYPE_U8
    raise ArchiveError(f"unsupported dtype {array.dtype} for archive entry")


def encode_archive(entries: Mapping[str, npt.ArrayLike]) -> bytes:
    """Serialize named arrays. Floating arrays are stored as f32.

    Raises:
        ArchiveError: On unsupported dtypes or oversized names.
    """
    parts = [MAGIC, struct.pack("<I", len(entries))]
    for name, value in entries.items():
        array = np.asarray(value)
        code = _dtype_code(array)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ArchiveError(f"entry name too long: {name[:32]}...")
        if array.ndim > 0xFF:
            raise ArchiveError(f"entry {name} has rank {array.ndim}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", code, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def decode_archive(blob: bytes) -> dict[str, npt.NDArray[Any]]:
    """Parse archive bytes into an insertion-ordered dict of arrays.

    Raises:
        ArchiveError: On bad magic, undecodable names, unknown dtype codes or
            truncation.
    """
    if blob[:4] != MAGIC:
        raise ArchiveError("not a DBT1 archive (bad magic)")
    view = memoryview(blob)
    offset = 4

    def take(fmt: str) -> tuple[int, ...]:
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(view):
            raise ArchiveError("archive truncated")
        values = struct.unpack_from(fmt, view, offset)
        offset += size
        return values

    (count,) = take("<I")
    entries: dict[str, npt.NDArray[Any]] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        if offset + name_len > len(view):
            raise ArchiveError("archive truncated")
        try:
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ArchiveError(f"entry name at byte {offset} is not valid UTF-8") from e
        offset += name_len
        code, rank = take("<BB")
        if code not in _DTYPES:
            raise ArchiveError(f"entry {name}: unknown dtype code {code}")
        dims = take(f"<{rank}I")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(view):
            raise ArchiveError(f"entry {name}: payload truncated")
        array = np.frombuffer(view[offset : offset + nbytes], dtype=dtype).reshape(dims)
        offset += nbytes
        entries[name] = array.astype(dtype.newbyteorder("=")) if dtype.kind == "f" else array.copy()
    if offset != len(view):
        raise ArchiveError(f"{len(view) - offset} trailing bytes after last entry")
    return entries


def save_archive(path: Path, entries: Mapping[str, npt.ArrayLike]) -> None:
    """Write entries to path, creating parent directories."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_archive(entries))


def load_archive(path: Path) -> dict[str, npt.NDArray[Any]]:
    """Read an archive file.

    Raises:
        ArchiveError: If the file is missing or malformed.
    """
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise ArchiveError(f"cannot read archive {path}: {e}") from e
    return decode_archive(blob)


def text_entry(text: str) -> npt.NDArray[np.uint8]:
    """Encode text as a u8 entry."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def entry_text(array: npt.NDArray[Any]) -> str:
    """Decode a u8 entry written by text_entry.

    Raises:
        ArchiveError: If the bytes are not valid UTF-8.
    """
    try:
        return bytes(np.asarray(array, dtype=np.uint8)).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ArchiveError(f"text entry is not valid UTF-8: {e}") from e
