"""Open User Communication payloads: raw 4-byte values, no metadata.

The receiver has to know type, count and byte order up front, so decoding
takes an :class:`OucLayout` describing what the sender was configured with.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import Malformed
from .common import VALUE_SIZE, DataType, Scalar

BYTE_ORDERS = {"big": ">", "little": "<"}


@dataclass(frozen=True)
class OucLayout:
    dtype: DataType = DataType.INT32
    byte_order: str = "big"
    count: int | None = None

    def __post_init__(self) -> None:
        if self.byte_order not in BYTE_ORDERS:
            raise ValueError(f"byte order must be one of {sorted(BYTE_ORDERS)}")


@dataclass(frozen=True)
class OucPayload:
    values: tuple[int | float, ...]
    dtype: DataType = DataType.INT32
    byte_order: str = "big"

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(Scalar(self.dtype, v).value for v in self.values))

    @property
    def layout(self) -> OucLayout:
        return OucLayout(self.dtype, self.byte_order, len(self.values))


def encode(msg: OucPayload) -> bytes:
    order = BYTE_ORDERS[msg.byte_order]
    return b"".join(msg.dtype.pack(v, order) for v in msg.values)


def decode(data: bytes, layout: OucLayout = OucLayout()) -> OucPayload:
    if len(data) % VALUE_SIZE:
        raise Malformed(f"{len(data)} bytes is not a whole number of {VALUE_SIZE}-byte values")
    count = len(data) // VALUE_SIZE
    if layout.count is not None and count != layout.count:
        raise Malformed(f"expected {layout.count} values, got {count}")
    order = BYTE_ORDERS[layout.byte_order]
    values = tuple(layout.dtype.unpack(data[i:i + VALUE_SIZE], order) for i in range(0, len(data), VALUE_SIZE))
    return OucPayload(values, layout.dtype, layout.byte_order)
