"""S7 protocol over ISO-on-TCP: TPKT (RFC 1006) + COTP + S7comm read services.

Layout of a read-var Job carrying one item (31 bytes)::

    TPKT   03 00 LL LL
    COTP   02 F0 80
    S7     32 01 00 00 RR RR 00 0E 00 00        (header, param length 14)
    param  04 01 12 0A 10 02 LL LL DD DD 84 AA AA AA

The matching Ack_Data is 25 bytes plus the returned data.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

from ..errors import LimitExceeded, Malformed
from .common import Reader

S7_PORT = 102
TPKT_VERSION = 3
TPKT_HEADER = 4
COTP_DT_HEADER = 3
S7_PROTOCOL_ID = 0x32

COTP_CR = 0xE0
COTP_CC = 0xD0
COTP_DT = 0xF0

ROSCTR_JOB = 0x01
ROSCTR_ACK_DATA = 0x03

FUNC_READ_VAR = 0x04
FUNC_SETUP_COMM = 0xF0

AREA_INPUTS = 0x81
AREA_OUTPUTS = 0x82
AREA_FLAGS = 0x83
AREA_DB = 0x84

RETURN_SUCCESS = 0xFF
RETURN_HW_FAULT = 0x01
RETURN_ADDRESS_OUT_OF_RANGE = 0x05
RETURN_TYPE_NOT_SUPPORTED = 0x06
RETURN_OBJECT_MISSING = 0x0A

TS_BYTE = 0x02          # request transport size
TS_BITS = 0x04          # response: length counted in bits
TS_OCTETS = 0x09        # response: length counted in bytes
TS_NULL = 0x00

# S7 PDU overhead of a one-item read response: header 12, param 2, item header 4
ACK_PDU_OVERHEAD = 18
JOB_PDU_SIZE = 24


class S7Kind(enum.Enum):
    JOB = "Job"
    ACK_DATA = "Ack_Data"


@dataclass(frozen=True)
class ReadItem:
    """Any-pointer to a byte range of one memory area."""

    area: int = AREA_DB
    db_number: int = 1
    start: int = 0
    length: int = 4


@dataclass(frozen=True)
class DataItem:
    return_code: int = RETURN_SUCCESS
    data: bytes = b""


@dataclass(frozen=True)
class S7Message:
    """A read-var Job or its Ack_Data."""

    kind: S7Kind
    pdu_ref: int
    items: tuple[ReadItem, ...] = ()
    data: tuple[DataItem, ...] = ()
    error_class: int = 0
    error_code: int = 0

    @property
    def value_bytes(self) -> bytes:
        return b"".join(d.data for d in self.data)


@dataclass(frozen=True)
class S7Setup:
    """Setup-communication Job / Ack_Data, negotiating the PDU size."""

    kind: S7Kind
    pdu_ref: int
    pdu_length: int
    max_amq_calling: int = 1
    max_amq_called: int = 1
    error_class: int = 0
    error_code: int = 0


@dataclass(frozen=True)
class CotpConnect:
    """COTP connection request (CR) or confirm (CC)."""

    confirm: bool
    src_ref: int = 1
    dst_ref: int = 0
    src_tsap: int = 0x0100
    dst_tsap: int = 0x0102
    tpdu_size: int = 0x0A


# -- encoding -----------------------------------------------------------------


def _tpkt(payload: bytes) -> bytes:
    return struct.pack(">BBH", TPKT_VERSION, 0, len(payload) + TPKT_HEADER) + payload


def _s7_frame(rosctr: int, pdu_ref: int, param: bytes, data: bytes, error: tuple[int, int] | None) -> bytes:
    header = struct.pack(">BBHHHH", S7_PROTOCOL_ID, rosctr, 0, pdu_ref, len(param), len(data))
    if error is not None:
        header += struct.pack(">BB", *error)
    return _tpkt(bytes((2, COTP_DT, 0x80)) + header + param + data)


def _encode_item(item: ReadItem) -> bytes:
    if not 0 <= item.start < (1 << 21):
        raise ValueError(f"start offset {item.start} outside 21-bit byte address")
    address = item.start << 3
    return struct.pack(">BBBBHHB", 0x12, 0x0A, 0x10, TS_BYTE, item.length, item.db_number, item.area) \
        + address.to_bytes(3, "big")


def _encode_data(items: tuple[DataItem, ...]) -> bytes:
    out = bytearray()
    for index, item in enumerate(items):
        if item.return_code == RETURN_SUCCESS:
            out += struct.pack(">BBH", item.return_code, TS_BITS, len(item.data) * 8) + item.data
        else:
            if item.data:
                raise ValueError("failed data items carry no data")
            out += struct.pack(">BBH", item.return_code, TS_NULL, 0)
        if len(item.data) % 2 and index < len(items) - 1:
            out += b"\x00"
    return bytes(out)


def encode(msg: S7Message | S7Setup | CotpConnect, pdu_limit: int | None = None) -> bytes:
    if isinstance(msg, CotpConnect):
        params = struct.pack(">BBH", 0xC1, 2, msg.src_tsap) + struct.pack(">BBH", 0xC2, 2, msg.dst_tsap) \
            + struct.pack(">BBB", 0xC0, 1, msg.tpdu_size)
        body = struct.pack(">BHHB", COTP_CC if msg.confirm else COTP_CR, msg.dst_ref, msg.src_ref, 0) + params
        return _tpkt(bytes((len(body),)) + body)

    ack = msg.kind is S7Kind.ACK_DATA
    rosctr = ROSCTR_ACK_DATA if ack else ROSCTR_JOB
    error = (msg.error_class, msg.error_code) if ack else None
    if isinstance(msg, S7Setup):
        param = struct.pack(">BBHHH", FUNC_SETUP_COMM, 0, msg.max_amq_calling, msg.max_amq_called, msg.pdu_length)
        return _s7_frame(rosctr, msg.pdu_ref, param, b"", error)

    if ack:
        param = bytes((FUNC_READ_VAR, len(msg.data)))
        data = _encode_data(msg.data)
    else:
        if msg.data:
            raise ValueError("a Job carries no data items")
        param = bytes((FUNC_READ_VAR, len(msg.items))) + b"".join(_encode_item(i) for i in msg.items)
        data = b""
    frame = _s7_frame(rosctr, msg.pdu_ref, param, data, error)
    pdu = len(frame) - TPKT_HEADER - COTP_DT_HEADER
    if pdu_limit is not None and pdu > pdu_limit:
        raise LimitExceeded(f"S7 PDU of {pdu} bytes exceeds negotiated limit {pdu_limit}")
    return frame


# -- decoding -----------------------------------------------------------------


def tpkt_length(header: bytes) -> int:
    """Total frame length announced by a 4-byte TPKT header."""
    if len(header) < TPKT_HEADER:
        raise Malformed("short TPKT header")
    version, _, length = struct.unpack(">BBH", header[:TPKT_HEADER])
    if version != TPKT_VERSION:
        raise Malformed(f"bad TPKT version {version}")
    if length < TPKT_HEADER + 3:
        raise Malformed(f"TPKT length {length} too small")
    return length


def _decode_cotp_connect(r: Reader, li: int) -> CotpConnect:
    end = r.pos + li
    pdu_type, dst_ref, src_ref, _cls = r.unpack(">BHHB")
    fields = {}
    while r.pos < end:
        code, size = r.unpack(">BB")
        fields[code] = r.take(size)
    if r.pos != end:
        raise Malformed("COTP parameter overruns header")
    r.expect_end()
    try:
        return CotpConnect(
            confirm=pdu_type == COTP_CC,
            src_ref=src_ref,
            dst_ref=dst_ref,
            src_tsap=int.from_bytes(fields[0xC1], "big"),
            dst_tsap=int.from_bytes(fields[0xC2], "big"),
            tpdu_size=fields[0xC0][0],
        )
    except (KeyError, IndexError):
        raise Malformed("COTP connect lacks TSAP or TPDU size parameter") from None


def _decode_items(r: Reader, count: int) -> tuple[ReadItem, ...]:
    items = []
    for _ in range(count):
        var_spec, size, syntax, ts, length, db, area = r.unpack(">BBBBHHB")
        if (var_spec, size, syntax) != (0x12, 0x0A, 0x10):
            raise Malformed("unsupported item addressing")
        if ts != TS_BYTE:
            raise Malformed(f"unsupported transport size {ts:#x}")
        address = int.from_bytes(r.take(3), "big")
        items.append(ReadItem(area=area, db_number=db, start=address >> 3, length=length))
    return tuple(items)


def _decode_data(r: Reader, count: int) -> tuple[DataItem, ...]:
    items = []
    for index in range(count):
        code, ts, length = r.unpack(">BBH")
        if ts == TS_BITS:
            size = math.ceil(length / 8)
        elif ts in (TS_OCTETS, TS_NULL):
            size = length
        else:
            raise Malformed(f"unsupported transport size {ts:#x}")
        data = r.take(size)
        if code != RETURN_SUCCESS and data:
            raise Malformed("failed data item carries data")
        items.append(DataItem(code, data))
        if size % 2 and index < count - 1:
            r.take(1)
    return tuple(items)


def decode(data: bytes) -> S7Message | S7Setup | CotpConnect:
    r = Reader(data)
    if tpkt_length(r.take(TPKT_HEADER)) != len(data):
        raise Malformed("TPKT length does not match frame")
    li = r.u8()
    if li == 0 or li > r.remaining:
        raise Malformed(f"bad COTP length {li}")
    pdu_type = r.data[r.pos]
    if pdu_type in (COTP_CR, COTP_CC):
        return _decode_cotp_connect(r, li)
    if pdu_type != COTP_DT or li != 2:
        raise Malformed(f"unsupported COTP PDU {pdu_type:#x}")
    r.take(2)
    proto, rosctr, _, pdu_ref, param_len, data_len = r.unpack(">BBHHHH")
    if proto != S7_PROTOCOL_ID:
        raise Malformed(f"bad S7 protocol id {proto:#x}")
    if rosctr == ROSCTR_JOB:
        kind, error = S7Kind.JOB, (0, 0)
    elif rosctr == ROSCTR_ACK_DATA:
        kind, error = S7Kind.ACK_DATA, r.unpack(">BB")
    else:
        raise Malformed(f"unsupported ROSCTR {rosctr}")
    param = Reader(r.take(param_len))
    body = Reader(r.take(data_len))
    r.expect_end()

    function = param.u8()
    if function == FUNC_SETUP_COMM:
        _, calling, called, pdu_length = param.unpack(">BHHH")
        param.expect_end()
        body.expect_end()
        return S7Setup(kind, pdu_ref, pdu_length, calling, called, *error)
    if function != FUNC_READ_VAR:
        raise Malformed(f"unsupported S7 function {function:#x}")
    count = param.u8()
    if kind is S7Kind.JOB:
        items = _decode_items(param, count)
        param.expect_end()
        body.expect_end()
        return S7Message(kind, pdu_ref, items=items)
    param.expect_end()
    values = _decode_data(body, count)
    body.expect_end()
    return S7Message(kind, pdu_ref, data=values, error_class=error[0], error_code=error[1])


# -- PDU splitting -------------------------------------------------------------


def values_per_pdu(pdu_limit: int, value_size: int = 4) -> int:
    """Largest number of values one read response can carry."""
    per = (pdu_limit - ACK_PDU_OVERHEAD) // value_size
    if per < 1 or pdu_limit < JOB_PDU_SIZE:
        raise LimitExceeded(f"PDU limit {pdu_limit} cannot carry a single value")
    return per


def split_counts(n: int, pdu_limit: int, value_size: int = 4) -> list[int]:
    """Fewest requests that fit the PDU, values spread as evenly as possible."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = math.ceil(n / values_per_pdu(pdu_limit, value_size))
    base, extra = divmod(n, k)
    return [base + 1 if i < extra else base for i in range(k)]


def split_for_pdu(n: int, profile, *, db_number: int = 1, start: int = 0,
                  pdu_ref: int = 1, value_size: int = 4) -> list[S7Message]:
    """Read Jobs covering ``n`` consecutive values of a data block.

    ``profile`` is a :class:`~plcbench.profiles.PlcProfile` or a bare PDU limit.
    """
    pdu_limit = profile if isinstance(profile, int) else profile.pdu_limit
    jobs = []
    offset = start
    for i, count in enumerate(split_counts(n, pdu_limit, value_size)):
        item = ReadItem(AREA_DB, db_number, offset, count * value_size)
        jobs.append(S7Message(S7Kind.JOB, (pdu_ref + i) & 0xFFFF, items=(item,)))
        offset += count * value_size
    return jobs
