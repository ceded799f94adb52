from __future__ import annotations

import threading
from typing import Mapping

from ..errors import PlcBenchError


class AddressOutOfRange(PlcBenchError, IndexError):
    pass


class DataBlockStore:
    """Data blocks of the emulated PLC.

    Blocks start out as a ramp (byte i holds ``i % 256``) so values read over
    different interfaces can be compared. Every access holds one lock, so a
    request never sees a half-applied write.
    """

    def __init__(self, sizes: Mapping[int, int] | None = None):
        sizes = {1: 1024} if sizes is None else sizes
        self._blocks = {int(db): bytearray(i % 256 for i in range(size)) for db, size in sizes.items()}
        self._lock = threading.Lock()
        self.cycle = 0

    @property
    def blocks(self) -> dict[int, int]:
        return {db: len(data) for db, data in self._blocks.items()}

    def _check(self, db: int, start: int, length: int) -> bytearray:
        block = self._blocks.get(db)
        if block is None:
            raise AddressOutOfRange(f"DB{db} does not exist")
        if length <= 0 or start < 0 or start + length > len(block):
            raise AddressOutOfRange(f"DB{db}[{start}:{start + length}] outside {len(block)} bytes")
        return block

    def read(self, db: int, start: int, length: int) -> bytes:
        with self._lock:
            return bytes(self._check(db, start, length)[start:start + length])

    def read_many(self, ranges: list[tuple[int, int, int]]) -> list[bytes | None]:
        """Read several ranges atomically; out-of-range entries come back as None."""
        out: list[bytes | None] = []
        with self._lock:
            for db, start, length in ranges:
                try:
                    out.append(bytes(self._check(db, start, length)[start:start + length]))
                except AddressOutOfRange:
                    out.append(None)
        return out

    def write(self, db: int, start: int, data: bytes) -> None:
        with self._lock:
            self._check(db, start, len(data))[start:start + len(data)] = data
            self.cycle += 1

    def write_many(self, writes: list[tuple[int, int, bytes]]) -> list[bool]:
        ok = []
        with self._lock:
            for db, start, data in writes:
                try:
                    self._check(db, start, len(data))[start:start + len(data)] = data
                    ok.append(True)
                except AddressOutOfRange:
                    ok.append(False)
            self.cycle += 1
        return ok
