"""OPC UA PubSub UADP NetworkMessages (UDP transport, Variant field encoding).

NetworkMessage with a single DataSetMessage (14 + 5 bytes per field)::

    F1 01 PP PP                 UADPFlags, ExtendedFlags1, PublisherId (UInt16)
    01 GG GG                    GroupFlags, WriterGroupId
    01 WW WW                    PayloadHeader: count, DataSetWriterId
    81 00 CC CC                 DataSetFlags1/2, FieldCount
    TT VV VV VV VV ...          one Variant per field

With more than one DataSetMessage a UInt16 size per message follows the
PayloadHeader.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import Malformed, TooManyFields, TooManyWriters
from ..profiles import PubSubLimits
from .common import DataType, Reader, Scalar

UADP_PORT = 4840
UADP_MULTICAST = "239.0.0.1"

UADP_VERSION = 1
FLAG_PUBLISHER_ID = 0x10
FLAG_GROUP_HEADER = 0x20
FLAG_PAYLOAD_HEADER = 0x40
FLAG_EXTENDED1 = 0x80
NETWORK_FLAGS = UADP_VERSION | FLAG_PUBLISHER_ID | FLAG_GROUP_HEADER | FLAG_PAYLOAD_HEADER | FLAG_EXTENDED1
EXT1_PUBLISHER_UINT16 = 0x01
GROUP_WRITER_GROUP_ID = 0x01
DATASET_VALID = 0x01
DATASET_FLAGS2 = 0x80
DATASET_FLAGS1 = DATASET_VALID | DATASET_FLAGS2
KEY_FRAME = 0x00

FIELD_SIZE = 5
NETWORK_HEADER_SIZE = 7        # flags, ext flags, publisher id, group flags, writer group id
DATASET_HEADER_SIZE = 4        # flags1, flags2, field count


@dataclass(frozen=True)
class DataSetMessage:
    writer_id: int
    fields: tuple[Scalar, ...]


@dataclass(frozen=True)
class UadpNetworkMessage:
    writer_group_id: int
    messages: tuple[DataSetMessage, ...]
    publisher_id: int = 1

    @property
    def values(self) -> tuple[Scalar, ...]:
        return tuple(f for m in self.messages for f in m.fields)


def check_limits(msg: UadpNetworkMessage, limits: PubSubLimits) -> None:
    if len(msg.messages) > limits.max_writers_per_group:
        raise TooManyWriters(f"{len(msg.messages)} DataSetWriters exceed the limit of "
                             f"{limits.max_writers_per_group} per WriterGroup")
    for dsm in msg.messages:
        if len(dsm.fields) > limits.max_fields_per_dataset:
            raise TooManyFields(f"{len(dsm.fields)} fields exceed the limit of "
                                f"{limits.max_fields_per_dataset} per PublishedDataSet")


def _encode_dataset(dsm: DataSetMessage) -> bytes:
    out = struct.pack("<BBH", DATASET_FLAGS1, KEY_FRAME, len(dsm.fields))
    for f in dsm.fields:
        out += bytes((int(f.dtype),)) + f.dtype.pack(f.value, "<")
    return out


def encode(msg: UadpNetworkMessage, limits: PubSubLimits | None = PubSubLimits()) -> bytes:
    """Encode a NetworkMessage; ``limits=None`` lifts the firmware limits."""
    if not msg.messages:
        raise ValueError("a NetworkMessage needs at least one DataSetMessage")
    if len(msg.messages) > 0xFF:
        raise TooManyWriters("payload header counts at most 255 DataSetMessages")
    if limits is not None:
        check_limits(msg, limits)
    out = struct.pack("<BBHBH", NETWORK_FLAGS, EXT1_PUBLISHER_UINT16, msg.publisher_id,
                      GROUP_WRITER_GROUP_ID, msg.writer_group_id)
    out += bytes((len(msg.messages),)) + b"".join(struct.pack("<H", m.writer_id) for m in msg.messages)
    bodies = [_encode_dataset(m) for m in msg.messages]
    if len(bodies) > 1:
        out += b"".join(struct.pack("<H", len(b)) for b in bodies)
    return out + b"".join(bodies)


def _decode_dataset(r: Reader, writer_id: int) -> DataSetMessage:
    flags1, flags2, count = r.unpack("<BBH")
    if flags1 != DATASET_FLAGS1 or flags2 != KEY_FRAME:
        raise Malformed(f"unsupported DataSetMessage flags {flags1:#x}/{flags2:#x}")
    fields = []
    for _ in range(count):
        tag = r.u8()
        try:
            dtype = DataType(tag)
        except ValueError:
            raise Malformed(f"unsupported field type {tag}") from None
        fields.append(Scalar(dtype, dtype.unpack(r.take(4), "<")))
    return DataSetMessage(writer_id, tuple(fields))


def decode(data: bytes, limits: PubSubLimits | None = None) -> UadpNetworkMessage:
    r = Reader(data)
    flags, ext1, publisher, group_flags, group_id = r.unpack("<BBHBH")
    if flags & 0x0F != UADP_VERSION:
        raise Malformed(f"bad UADP version {flags & 0x0F}")
    if flags != NETWORK_FLAGS or ext1 != EXT1_PUBLISHER_UINT16 or group_flags != GROUP_WRITER_GROUP_ID:
        raise Malformed("unsupported NetworkMessage header layout")
    count = r.u8()
    if count == 0:
        raise Malformed("empty payload header")
    writer_ids = r.unpack(f"<{count}H")
    if count > 1:
        sizes = r.unpack(f"<{count}H")
        messages = []
        for wid, size in zip(writer_ids, sizes):
            sub = Reader(r.take(size))
            messages.append(_decode_dataset(sub, wid))
            sub.expect_end()
    else:
        messages = [_decode_dataset(r, writer_ids[0])]
    r.expect_end()
    msg = UadpNetworkMessage(group_id, tuple(messages), publisher)
    if limits is not None:
        check_limits(msg, limits)
    return msg
