"""Small helpers shared by the binary file formats."""

from __future__ import annotations

import hashlib
import struct
from typing import BinaryIO

from .errors import FormatError


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_exact(f: BinaryIO, n: int, path: str | None = None) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(
            f"unexpected end of file (wanted {n} bytes, got {len(data)})", path=path
        )
    return data


def read_struct(f: BinaryIO, fmt: str, path: str | None = None) -> tuple:
    return struct.unpack(fmt, read_exact(f, struct.calcsize(fmt), path=path))


class HashingWriter:
    """File-object wrapper that maintains a running sha256 of written bytes."""

    def __init__(self, f: BinaryIO):
        self._f = f
        self._h = hashlib.sha256()
        self.bytes_written = 0

    def write(self, data: bytes) -> int:
        self._h.update(data)
        self.bytes_written += len(data)
        return self._f.write(data)

    def hexdigest(self) -> str:
        return self._h.hexdigest()


class HashingReader:
    """File-object wrapper that maintains a running sha256 of read bytes."""

    def __init__(self, f: BinaryIO):
        self._f = f
        self._h = hashlib.sha256()

    def read(self, n: int = -1) -> bytes:
        data = self._f.read(n)
        self._h.update(data)
        return data

    def hexdigest(self) -> str:
        return self._h.hexdigest()
