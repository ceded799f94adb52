"""OPC UA binary (UATCP) Read and Write service messages.

Only the steady-state ``MSG`` chunks are covered: a secure-channel header with
security policy None, followed by the binary-encoded service body. Hello,
OpenSecureChannel and session services are out of scope.
"""
from __future__ import annotations

import struct
import uuid
from dataclasses import dataclass, field
from typing import Union

from ..errors import Malformed, UnsupportedKind
from .common import DataType, Reader, Scalar

OPCUA_PORT = 4840
CHUNK_HEADER = 8
MSG_HEADER = 24   # chunk header + channel id + token id + sequence header

READ_REQUEST_ID = 631
READ_RESPONSE_ID = 634
WRITE_REQUEST_ID = 673
WRITE_RESPONSE_ID = 676

ATTRIBUTE_VALUE = 13
TIMESTAMPS_SOURCE = 0

GOOD = 0x00000000
BAD_NODE_ID_UNKNOWN = 0x80340000
BAD_TYPE_MISMATCH = 0x80740000
BAD_OUT_OF_RANGE = 0x803C0000

DV_VALUE = 0x01
DV_STATUS = 0x02
DV_SOURCE_TIMESTAMP = 0x04


@dataclass(frozen=True)
class NodeId:
    namespace: int
    identifier: int | str | uuid.UUID


def _encode_string(text: str | None) -> bytes:
    if text is None:
        return struct.pack("<i", -1)
    raw = text.encode("utf-8")
    return struct.pack("<i", len(raw)) + raw


def _decode_string(r: Reader) -> str | None:
    (size,) = r.unpack("<i")
    if size == -1:
        return None
    if size < 0:
        raise Malformed(f"negative string length {size}")
    try:
        return r.take(size).decode("utf-8")
    except UnicodeDecodeError:
        raise Malformed("string is not valid UTF-8") from None


def encode_node_id(node: NodeId) -> bytes:
    ns, ident = node.namespace, node.identifier
    if isinstance(ident, bool):
        raise TypeError("bool is not a node identifier")
    if isinstance(ident, int):
        if ns == 0 and 0 <= ident < 0x100:
            return struct.pack("<BB", 0x00, ident)
        if 0 <= ns < 0x100 and 0 <= ident < 0x10000:
            return struct.pack("<BBH", 0x01, ns, ident)
        return struct.pack("<BHI", 0x02, ns, ident)
    if isinstance(ident, str):
        return struct.pack("<BH", 0x03, ns) + _encode_string(ident)
    if isinstance(ident, uuid.UUID):
        return struct.pack("<BH", 0x04, ns) + ident.bytes_le
    raise TypeError(f"unsupported node identifier {ident!r}")


def decode_node_id(r: Reader) -> NodeId:
    kind = r.u8()
    if kind == 0x00:
        return NodeId(0, r.u8())
    if kind == 0x01:
        ns, ident = r.unpack("<BH")
        return NodeId(ns, ident)
    if kind == 0x02:
        ns, ident = r.unpack("<HI")
        return NodeId(ns, ident)
    if kind == 0x03:
        (ns,) = r.unpack("<H")
        ident = _decode_string(r)
        if ident is None:
            raise Malformed("null string node identifier")
        return NodeId(ns, ident)
    if kind == 0x04:
        (ns,) = r.unpack("<H")
        return NodeId(ns, uuid.UUID(bytes_le=r.take(16)))
    raise Malformed(f"unsupported NodeId encoding {kind:#x}")


@dataclass(frozen=True)
class DataValue:
    value: Scalar | None = None
    status: int | None = None
    source_timestamp: int | None = None   # 100 ns ticks since 1601-01-01


def encode_data_value(dv: DataValue) -> bytes:
    mask = (DV_VALUE if dv.value is not None else 0) | (DV_STATUS if dv.status is not None else 0) \
        | (DV_SOURCE_TIMESTAMP if dv.source_timestamp is not None else 0)
    out = bytes((mask,))
    if dv.value is not None:
        out += bytes((int(dv.value.dtype),)) + dv.value.dtype.pack(dv.value.value, "<")
    if dv.status is not None:
        out += struct.pack("<I", dv.status)
    if dv.source_timestamp is not None:
        out += struct.pack("<q", dv.source_timestamp)
    return out


def decode_data_value(r: Reader) -> DataValue:
    mask = r.u8()
    if mask & ~(DV_VALUE | DV_STATUS | DV_SOURCE_TIMESTAMP):
        raise Malformed(f"unsupported DataValue mask {mask:#x}")
    value = status = ts = None
    if mask & DV_VALUE:
        tag = r.u8()
        try:
            dtype = DataType(tag)
        except ValueError:
            raise Malformed(f"unsupported variant type {tag}") from None
        value = Scalar(dtype, dtype.unpack(r.take(4), "<"))
    if mask & DV_STATUS:
        (status,) = r.unpack("<I")
    if mask & DV_SOURCE_TIMESTAMP:
        (ts,) = r.unpack("<q")
    return DataValue(value, status, ts)


@dataclass(frozen=True)
class Channel:
    """Secure-channel and sequence header of a MSG chunk."""

    channel_id: int = 1
    token_id: int = 1
    sequence_number: int = 1
    request_id: int = 1


SESSION_TOKEN = NodeId(0, uuid.UUID("00000000-0000-0000-0000-000000000001"))


@dataclass(frozen=True)
class RequestHeader:
    auth_token: NodeId = SESSION_TOKEN
    timestamp: int = 0
    request_handle: int = 0
    timeout_hint: int = 1000


@dataclass(frozen=True)
class ResponseHeader:
    timestamp: int = 0
    request_handle: int = 0
    service_result: int = GOOD


@dataclass(frozen=True)
class ReadRequest:
    node_ids: tuple[NodeId, ...]
    header: RequestHeader = field(default_factory=RequestHeader)
    channel: Channel = field(default_factory=Channel)
    max_age: float = 0.0


@dataclass(frozen=True)
class ReadResponse:
    results: tuple[DataValue, ...]
    header: ResponseHeader = field(default_factory=ResponseHeader)
    channel: Channel = field(default_factory=Channel)


@dataclass(frozen=True)
class WriteValue:
    node_id: NodeId
    value: DataValue


@dataclass(frozen=True)
class WriteRequest:
    nodes: tuple[WriteValue, ...]
    header: RequestHeader = field(default_factory=RequestHeader)
    channel: Channel = field(default_factory=Channel)


@dataclass(frozen=True)
class WriteResponse:
    results: tuple[int, ...]
    header: ResponseHeader = field(default_factory=ResponseHeader)
    channel: Channel = field(default_factory=Channel)


OpcUaServiceMessage = Union[ReadRequest, ReadResponse, WriteRequest, WriteResponse]

_TYPE_IDS = {ReadRequest: READ_REQUEST_ID, ReadResponse: READ_RESPONSE_ID,
             WriteRequest: WRITE_REQUEST_ID, WriteResponse: WRITE_RESPONSE_ID}


def _encode_request_header(h: RequestHeader) -> bytes:
    return encode_node_id(h.auth_token) + struct.pack("<qII", h.timestamp, h.request_handle, 0) \
        + _encode_string(None) + struct.pack("<I", h.timeout_hint) + b"\x00\x00\x00"


def _decode_request_header(r: Reader) -> RequestHeader:
    token = decode_node_id(r)
    timestamp, handle, _diag = r.unpack("<qII")
    _decode_string(r)
    (timeout,) = r.unpack("<I")
    _decode_extension_object(r)
    return RequestHeader(token, timestamp, handle, timeout)


def _encode_response_header(h: ResponseHeader) -> bytes:
    # empty DiagnosticInfo, empty string table, null extension object
    return struct.pack("<qII", h.timestamp, h.request_handle, h.service_result) + b"\x00" \
        + struct.pack("<i", 0) + b"\x00\x00\x00"


def _decode_response_header(r: Reader) -> ResponseHeader:
    timestamp, handle, result = r.unpack("<qII")
    if r.u8() != 0:
        raise Malformed("service diagnostics are not supported")
    if _array_length(r) != 0:
        raise Malformed("string tables are not supported")
    _decode_extension_object(r)
    return ResponseHeader(timestamp, handle, result)


def _decode_extension_object(r: Reader) -> None:
    decode_node_id(r)
    if r.u8() != 0:
        raise Malformed("extension object bodies are not supported")


def _array_length(r: Reader) -> int:
    (count,) = r.unpack("<i")
    if count < -1:
        raise Malformed(f"bad array length {count}")
    if count > r.remaining:
        raise Malformed(f"array of {count} elements overruns message")
    return max(count, 0)


def encode(msg: OpcUaServiceMessage) -> bytes:
    try:
        type_id = _TYPE_IDS[type(msg)]
    except KeyError:
        raise UnsupportedKind(f"cannot encode {type(msg).__name__} as OPC UA") from None
    body = encode_node_id(NodeId(0, type_id))
    if isinstance(msg, ReadRequest):
        body += _encode_request_header(msg.header) + struct.pack("<dIi", msg.max_age, TIMESTAMPS_SOURCE,
                                                                  len(msg.node_ids))
        for node in msg.node_ids:
            body += encode_node_id(node) + struct.pack("<I", ATTRIBUTE_VALUE) + _encode_string(None) \
                + struct.pack("<H", 0) + _encode_string(None)
    elif isinstance(msg, ReadResponse):
        body += _encode_response_header(msg.header) + struct.pack("<i", len(msg.results))
        body += b"".join(encode_data_value(dv) for dv in msg.results) + struct.pack("<i", 0)
    elif isinstance(msg, WriteRequest):
        body += _encode_request_header(msg.header) + struct.pack("<i", len(msg.nodes))
        for wv in msg.nodes:
            body += encode_node_id(wv.node_id) + struct.pack("<I", ATTRIBUTE_VALUE) + _encode_string(None) \
                + encode_data_value(wv.value)
    else:
        body += _encode_response_header(msg.header) + struct.pack("<i", len(msg.results))
        body += b"".join(struct.pack("<I", code) for code in msg.results) + struct.pack("<i", 0)
    ch = msg.channel
    size = MSG_HEADER + len(body)
    return b"MSGF" + struct.pack("<IIIII", size, ch.channel_id, ch.token_id, ch.sequence_number,
                                 ch.request_id) + body


def chunk_length(header: bytes) -> int:
    """Total chunk size announced by an 8-byte UATCP header."""
    if len(header) < CHUNK_HEADER:
        raise Malformed("short UATCP header")
    if header[:3] != b"MSG" or header[3:4] != b"F":
        raise Malformed(f"unsupported chunk type {header[:4]!r}")
    (size,) = struct.unpack("<I", header[4:8])
    if size < MSG_HEADER:
        raise Malformed(f"chunk size {size} too small")
    return size


def decode(data: bytes) -> OpcUaServiceMessage:
    r = Reader(data)
    if chunk_length(r.take(CHUNK_HEADER)) != len(data):
        raise Malformed("chunk size does not match message")
    channel = Channel(*r.unpack("<IIII"))
    type_node = decode_node_id(r)
    type_id = type_node.identifier if type_node.namespace == 0 else None
    if type_id == READ_REQUEST_ID:
        header = _decode_request_header(r)
        max_age, _ts = r.unpack("<dI")
        nodes = []
        for _ in range(_array_length(r)):
            node = decode_node_id(r)
            attr, = r.unpack("<I")
            if attr != ATTRIBUTE_VALUE:
                raise Malformed(f"only the Value attribute is supported, got {attr}")
            _decode_string(r)
            r.unpack("<H")
            _decode_string(r)
            nodes.append(node)
        msg = ReadRequest(tuple(nodes), header, channel, max_age)
    elif type_id == READ_RESPONSE_ID:
        header = _decode_response_header(r)
        results = tuple(decode_data_value(r) for _ in range(_array_length(r)))
        _array_length(r)
        msg = ReadResponse(results, header, channel)
    elif type_id == WRITE_REQUEST_ID:
        header = _decode_request_header(r)
        nodes = []
        for _ in range(_array_length(r)):
            node = decode_node_id(r)
            attr, = r.unpack("<I")
            if attr != ATTRIBUTE_VALUE:
                raise Malformed(f"only the Value attribute is supported, got {attr}")
            _decode_string(r)
            nodes.append(WriteValue(node, decode_data_value(r)))
        msg = WriteRequest(tuple(nodes), header, channel)
    elif type_id == WRITE_RESPONSE_ID:
        header = _decode_response_header(r)
        (count,) = r.unpack("<i")
        if count < 0 or 4 * count > r.remaining:
            raise Malformed(f"bad result count {count}")
        results = r.unpack(f"<{count}I")
        _array_length(r)
        msg = WriteResponse(tuple(results), header, channel)
    else:
        raise Malformed(f"unsupported service type {type_node}")
    r.expect_end()
    return msg


# -- node-id calibration ---------------------------------------------------------

# String identifiers sized so a ReadRequest for n values matches the measured
# message sizes (132 / 618 / 5226 application bytes for 1 / 10 / 100 values).
READ_ITEM_FIXED = 14 + 7      # ReadValueId fields + string NodeId header
_READ_ANCHORS = ((0, 90), (1, 132), (10, 618), (100, 5226))


def _read_body_size(n: int) -> int:
    for (n0, b0), (n1, b1) in zip(_READ_ANCHORS, _READ_ANCHORS[1:]):
        if n <= n1:
            return b0 + (b1 - b0) * (n - n0) // (n1 - n0)
    (n0, b0), (n1, b1) = _READ_ANCHORS[-2:]
    return b1 + (b1 - b0) * (n - n1) // (n1 - n0)


def read_node_id(index: int, namespace: int = 3) -> NodeId:
    """Calibrated string NodeId of the ``index``-th (1-based) variable."""
    length = _read_body_size(index) - _read_body_size(index - 1) - READ_ITEM_FIXED
    head, tail = '"DB1"."v', f'{index}"'
    return NodeId(namespace, head + "_" * (length - len(head) - len(tail)) + tail)


def write_node_id(index: int, namespace: int = 3) -> NodeId:
    """Numeric NodeId (four-byte encoding) of the ``index``-th variable."""
    return NodeId(namespace, index)


def node_index(node: NodeId) -> int | None:
    """Variable index addressed by a NodeId produced by the helpers above."""
    ident = node.identifier
    if isinstance(ident, int) and not isinstance(ident, bool):
        return ident
    if isinstance(ident, str) and ident.endswith('"'):
        digits = ident[:-1]
        stripped = digits.rstrip("0123456789")
        if stripped != digits:
            return int(digits[len(stripped):])
    return None
