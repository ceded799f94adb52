"""Shared primitives for the wire codecs: 4-byte scalar types and a bounds-checked reader."""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

from ..errors import Malformed

VALUE_SIZE = 4


class DataType(enum.IntEnum):
    """4-byte scalar types; the value is the OPC UA built-in type id."""

    INT32 = 6
    UINT32 = 7
    FLOAT = 10

    @property
    def code(self) -> str:
        return {DataType.INT32: "i", DataType.UINT32: "I", DataType.FLOAT: "f"}[self]

    def pack(self, value: int | float, byteorder: str = ">") -> bytes:
        try:
            return struct.pack(byteorder + self.code, value)
        except struct.error as exc:
            raise ValueError(f"{value!r} does not fit {self.name}") from exc

    def unpack(self, raw: bytes, byteorder: str = ">") -> int | float:
        return struct.unpack(byteorder + self.code, raw)[0]


@dataclass(frozen=True)
class Scalar:
    """One data value together with its type tag."""

    dtype: DataType
    value: int | float

    def __post_init__(self) -> None:
        # normalise floats to what survives a float32 round-trip
        if self.dtype is DataType.FLOAT:
            packed = self.dtype.unpack(self.dtype.pack(self.value))
            if not (math.isnan(packed) and math.isnan(self.value)) and packed != self.value:
                object.__setattr__(self, "value", packed)
        else:
            self.dtype.pack(self.value)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.dtype is other.dtype and self.dtype.pack(self.value) == other.dtype.pack(other.value)

    def __hash__(self) -> int:
        return hash((self.dtype, self.dtype.pack(self.value)))


class Reader:
    """Cursor over a byte string that raises :class:`Malformed` on underrun."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = bytes(data)
        self.pos = offset

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, size: int) -> bytes:
        if size < 0 or self.pos + size > len(self.data):
            raise Malformed(f"truncated: need {size} bytes at offset {self.pos}, have {self.remaining}")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u8(self) -> int:
        return self.take(1)[0]

    def expect_end(self) -> None:
        if self.remaining:
            raise Malformed(f"{self.remaining} unexpected trailing bytes")
