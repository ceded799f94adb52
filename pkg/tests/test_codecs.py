"""Codec tests. Byte fixtures are assembled by hand from the protocol field
layouts (RFC 1006 TPKT, ISO 8073 COTP, S7 read-var, OPC UA binary encoding,
UADP NetworkMessage) rather than produced by the code under test."""
import math
import struct
import uuid

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from plcbench import codecs
from plcbench.codecs import opcua, ouc, s7, uadp
from plcbench.codecs.common import DataType, Scalar
from plcbench.errors import LimitExceeded, Malformed, TooManyFields, TooManyWriters, UnsupportedKind
from plcbench.profiles import Interface, PubSubLimits, S7_314


def h(text: str) -> bytes:
    return bytes.fromhex(text.replace(" ", ""))


# -- hand-assembled fixtures --------------------------------------------------------

S7_JOB_40 = h("03 00 00 1F" "02 F0 80" "32 01 0000 0001 000E 0000" "04 01 12 0A 10 02 0028 0001 84 000000")
S7_ACK_8 = h("03 00 00 21" "02 F0 80" "32 03 0000 0001 0002 000C 00 00" "04 01" "FF 04 0040 0102030405060708")
S7_ACK_ODD = h("03 00 00 26" "02 F0 80" "32 03 0000 0009 0002 0011 00 00" "04 03"
               "FF 04 0018 AABBCC 00" "0A 00 0000" "FF 04 0008 DD")
COTP_CR = h("03 00 00 16" "11 E0 0000 0001 00" "C1 02 0100" "C2 02 0102" "C0 01 0A")
S7_SETUP_480 = h("03 00 00 19" "02 F0 80" "32 01 0000 0000 0008 0000" "F0 00 0001 0001 01E0")

_SESSION_GUID = "04 0000" + "00" * 15 + "01"
_REQ_HEADER = _SESSION_GUID + "0000000000000000" "01000000" "00000000" "FFFFFFFF" "E8030000" "000000"
_READ_BODY = ("01 00 7702" + _REQ_HEADER + "0000000000000000" "00000000" "01000000"
              "03 0300 01000000 78" "0D000000" "FFFFFFFF" "0000 FFFFFFFF")
OPCUA_READ_1 = b"MSGF" + struct.pack("<I", 24 + len(h(_READ_BODY))) + h("01000000" * 4) + h(_READ_BODY)

_WRITE_RESP_BODY = ("01 00 A402" "0000000000000000" "07000000" "00000000" "00" "00000000" "000000"
                    "01000000" "00000000" "00000000")
OPCUA_WRITE_RESP = b"MSGF" + struct.pack("<I", 64) + h("01000000" * 4) + h(_WRITE_RESP_BODY)

_WRITE_REQ_BODY = ("01 00 A102" + _REQ_HEADER + "01000000"
                   "01 03 0500" "0D000000" "FFFFFFFF" "01 06 2A000000")
OPCUA_WRITE_REQ = b"MSGF" + struct.pack("<I", 24 + len(h(_WRITE_REQ_BODY))) + h("01000000" * 4) + h(_WRITE_REQ_BODY)

UADP_ONE = h("F1 01 0100" "01 0100" "01 0100" "81 00 0100" "06 05000000")
UADP_TWO = h("F1 01 0100" "01 0100" "02 0100 0200" "0900 0900" "81 00 0100 06 01000000" "81 00 0100 0A 0000803F")


def test_s7_job_fixture():
    job = s7.S7Message(s7.S7Kind.JOB, 1, items=(s7.ReadItem(s7.AREA_DB, 1, 0, 40),))
    assert s7.encode(job) == S7_JOB_40
    assert s7.decode(S7_JOB_40) == job
    assert len(S7_JOB_40) == 31


def test_s7_ack_fixture():
    ack = s7.S7Message(s7.S7Kind.ACK_DATA, 1, data=(s7.DataItem(s7.RETURN_SUCCESS, bytes(range(1, 9))),))
    assert s7.encode(ack) == S7_ACK_8
    assert s7.decode(S7_ACK_8) == ack
    assert len(S7_ACK_8) == 25 + 8


def test_s7_ack_odd_lengths_are_padded_between_items():
    ack = s7.S7Message(s7.S7Kind.ACK_DATA, 9, data=(s7.DataItem(s7.RETURN_SUCCESS, h("AABBCC")),
                                                    s7.DataItem(s7.RETURN_OBJECT_MISSING),
                                                    s7.DataItem(s7.RETURN_SUCCESS, h("DD"))))
    # an odd-length item is padded only when another item follows
    assert s7.encode(ack) == S7_ACK_ODD
    assert s7.decode(S7_ACK_ODD) == ack


def test_cotp_connect_fixture():
    cr = s7.CotpConnect(False, src_ref=1, dst_ref=0, src_tsap=0x0100, dst_tsap=0x0102, tpdu_size=0x0A)
    assert s7.encode(cr) == COTP_CR
    assert s7.decode(COTP_CR) == cr


def test_setup_fixture():
    setup = s7.S7Setup(s7.S7Kind.JOB, 0, 480)
    assert s7.encode(setup) == S7_SETUP_480
    assert s7.decode(S7_SETUP_480) == setup


def test_opcua_read_request_fixture():
    msg = opcua.ReadRequest((opcua.NodeId(3, "x"),), opcua.RequestHeader(request_handle=1))
    assert opcua.encode(msg) == OPCUA_READ_1
    assert opcua.decode(OPCUA_READ_1) == msg


def test_opcua_write_fixtures():
    req = opcua.WriteRequest((opcua.WriteValue(opcua.NodeId(3, 5), opcua.DataValue(Scalar(DataType.INT32, 42))),),
                             opcua.RequestHeader(request_handle=1))
    assert opcua.encode(req) == OPCUA_WRITE_REQ
    assert opcua.decode(OPCUA_WRITE_REQ) == req
    resp = opcua.WriteResponse((opcua.GOOD,), opcua.ResponseHeader(0, 7, opcua.GOOD))
    assert opcua.encode(resp) == OPCUA_WRITE_RESP
    assert opcua.decode(OPCUA_WRITE_RESP) == resp


def test_session_token_is_guid_node():
    assert opcua.encode_node_id(opcua.SESSION_TOKEN) == h(_SESSION_GUID)


@pytest.mark.parametrize("node,raw", [
    (opcua.NodeId(0, 13), "00 0D"),
    (opcua.NodeId(3, 5), "01 03 0500"),
    (opcua.NodeId(3, 70000), "02 0300 70110100"),
    (opcua.NodeId(1, "ab"), "03 0100 02000000 6162"),
    (opcua.NodeId(2, uuid.UUID("72962B91-FA75-4AE6-8D28-B404DC7DAF63")),
     "04 0200 912B9672 75FA E64A 8D28B404DC7DAF63"),
])
def test_node_id_encodings(node, raw):
    assert opcua.encode_node_id(node) == h(raw)


def test_uadp_fixtures():
    one = uadp.UadpNetworkMessage(1, (uadp.DataSetMessage(1, (Scalar(DataType.INT32, 5),)),))
    assert uadp.encode(one) == UADP_ONE
    assert uadp.decode(UADP_ONE) == one
    two = uadp.UadpNetworkMessage(1, (uadp.DataSetMessage(1, (Scalar(DataType.INT32, 1),)),
                                      uadp.DataSetMessage(2, (Scalar(DataType.FLOAT, 1.0),))))
    assert uadp.encode(two) == UADP_TWO
    assert uadp.decode(UADP_TWO) == two


def test_ouc_fixtures():
    assert ouc.encode(ouc.OucPayload((1, -1))) == h("00000001 FFFFFFFF")
    assert ouc.encode(ouc.OucPayload((1.0,), DataType.FLOAT, "little")) == h("0000803F")
    assert ouc.decode(h("00000001 FFFFFFFF"), ouc.OucLayout(count=2)).values == (1, -1)


# -- limits and errors --------------------------------------------------------------


def test_uadp_limits():
    fields = tuple(Scalar(DataType.INT32, i) for i in range(11))
    with pytest.raises(TooManyFields):
        uadp.encode(uadp.UadpNetworkMessage(1, (uadp.DataSetMessage(1, fields),)))
    three = tuple(uadp.DataSetMessage(i, fields[:1]) for i in range(3))
    with pytest.raises(TooManyWriters):
        uadp.encode(uadp.UadpNetworkMessage(1, three))
    assert uadp.decode(uadp.encode(uadp.UadpNetworkMessage(1, three), limits=None)).messages == three
    with pytest.raises(TooManyWriters):
        uadp.decode(uadp.encode(uadp.UadpNetworkMessage(1, three), limits=None), limits=PubSubLimits())


def test_s7_pdu_limit_enforced():
    ack = s7.S7Message(s7.S7Kind.ACK_DATA, 1, data=(s7.DataItem(s7.RETURN_SUCCESS, bytes(400)),))
    with pytest.raises(LimitExceeded):
        s7.encode(ack, pdu_limit=S7_314.pdu_limit)
    assert len(s7.encode(ack, pdu_limit=960)) == 425


def test_ouc_layout_mismatch():
    with pytest.raises(Malformed):
        ouc.decode(bytes(7))
    with pytest.raises(Malformed):
        ouc.decode(bytes(8), ouc.OucLayout(count=3))


def test_dispatch():
    assert codecs.decode(S7_JOB_40, "s7") == s7.decode(S7_JOB_40)
    assert codecs.decode(UADP_ONE, Interface.UADP) == uadp.decode(UADP_ONE)
    with pytest.raises(UnsupportedKind):
        codecs.encode("not a message")
    with pytest.raises(Malformed):
        codecs.decode(b"", "opcua-read")


@pytest.mark.parametrize("fixture,iface", [(S7_JOB_40, "s7"), (S7_ACK_8, "s7"), (COTP_CR, "s7"),
                                           (OPCUA_READ_1, "opcua-read"), (OPCUA_WRITE_RESP, "opcua-write"),
                                           (UADP_ONE, "uadp"), (UADP_TWO, "uadp")])
def test_truncated_messages_are_malformed(fixture, iface):
    for cut in range(len(fixture)):
        with pytest.raises(Malformed):
            codecs.decode(fixture[:cut], iface)
    with pytest.raises(Malformed):
        codecs.decode(fixture + b"\x00", iface)


@given(st.binary(max_size=300), st.sampled_from(["s7", "opcua-read", "uadp"]))
def test_garbage_raises_only_malformed(data, iface):
    try:
        codecs.decode(data, iface)
    except Malformed:
        pass


# -- round-trip properties ---------------------------------------------------------

dtypes = st.sampled_from(list(DataType))


@st.composite
def scalars(draw, dtype=None):
    dtype = dtype or draw(dtypes)
    if dtype is DataType.INT32:
        return Scalar(dtype, draw(st.integers(-2**31, 2**31 - 1)))
    if dtype is DataType.UINT32:
        return Scalar(dtype, draw(st.integers(0, 2**32 - 1)))
    return Scalar(dtype, draw(st.floats(width=32, allow_nan=False)))


@given(dtypes.flatmap(lambda d: st.tuples(st.just(d), st.lists(scalars(d), min_size=1, max_size=100))),
       st.sampled_from(["big", "little"]))
def test_ouc_roundtrip(typed, order):
    dtype, values = typed
    msg = ouc.OucPayload(tuple(v.value for v in values), dtype, order)
    assert ouc.decode(ouc.encode(msg), msg.layout) == msg
    assert len(ouc.encode(msg)) == 4 * len(values)


read_items = st.builds(s7.ReadItem, st.sampled_from([s7.AREA_DB, s7.AREA_FLAGS, s7.AREA_INPUTS]),
                       st.integers(0, 0xFFFF), st.integers(0, (1 << 21) - 1), st.integers(0, 0xFFFF))
data_items = st.one_of(
    st.builds(s7.DataItem, st.just(s7.RETURN_SUCCESS), st.binary(min_size=1, max_size=300)),
    st.builds(s7.DataItem, st.sampled_from([s7.RETURN_ADDRESS_OUT_OF_RANGE, s7.RETURN_OBJECT_MISSING])))
refs = st.integers(0, 0xFFFF)
s7_messages = st.one_of(
    st.builds(lambda r, i: s7.S7Message(s7.S7Kind.JOB, r, items=tuple(i)), refs, st.lists(read_items, min_size=1,
                                                                                           max_size=8)),
    st.builds(lambda r, d, e: s7.S7Message(s7.S7Kind.ACK_DATA, r, data=tuple(d), error_class=e[0], error_code=e[1]),
              refs, st.lists(data_items, max_size=8), st.sampled_from([(0, 0), (0x85, 0)])),
    st.builds(s7.S7Setup, st.sampled_from(list(s7.S7Kind)), refs, st.integers(0, 0xFFFF),
              st.integers(0, 0xFFFF), st.integers(0, 0xFFFF)),
    st.builds(s7.CotpConnect, st.booleans(), refs, refs, refs, refs, st.integers(7, 13)),
)


@given(s7_messages)
def test_s7_roundtrip(msg):
    assert s7.decode(s7.encode(msg)) == msg


u32 = st.integers(0, 2**32 - 1)
node_ids = st.one_of(
    st.builds(opcua.NodeId, st.integers(0, 0xFFFF), u32),
    st.builds(opcua.NodeId, st.integers(0, 0xFFFF), st.text(max_size=40)),
    st.builds(opcua.NodeId, st.integers(0, 0xFFFF), st.uuids()),
)
data_values = st.builds(opcua.DataValue, st.none() | scalars(), st.none() | u32,
                        st.none() | st.integers(0, 2**63 - 1))
channels = st.builds(opcua.Channel, u32, u32, u32, u32)
req_headers = st.builds(opcua.RequestHeader, st.just(opcua.SESSION_TOKEN) | node_ids,
                        st.integers(0, 2**63 - 1), u32, u32)
resp_headers = st.builds(opcua.ResponseHeader, st.integers(0, 2**63 - 1), u32, u32)
opcua_messages = st.one_of(
    st.builds(lambda n, hd, c, a: opcua.ReadRequest(tuple(n), hd, c, a), st.lists(node_ids, max_size=20),
              req_headers, channels, st.floats(0, 1e6)),
    st.builds(lambda r, hd, c: opcua.ReadResponse(tuple(r), hd, c), st.lists(data_values, max_size=20),
              resp_headers, channels),
    st.builds(lambda n, hd, c: opcua.WriteRequest(tuple(n), hd, c),
              st.lists(st.builds(opcua.WriteValue, node_ids, data_values), max_size=20), req_headers, channels),
    st.builds(lambda r, hd, c: opcua.WriteResponse(tuple(r), hd, c), st.lists(u32, max_size=20),
              resp_headers, channels),
)


@given(opcua_messages)
def test_opcua_roundtrip(msg):
    assert opcua.decode(opcua.encode(msg)) == msg


uadp_messages = st.builds(
    lambda g, p, dsms: uadp.UadpNetworkMessage(g, tuple(dsms), p),
    st.integers(0, 0xFFFF), st.integers(0, 0xFFFF),
    st.lists(st.builds(lambda w, f: uadp.DataSetMessage(w, tuple(f)), st.integers(0, 0xFFFF),
                       st.lists(scalars(), min_size=1, max_size=10)), min_size=1, max_size=2))


@given(uadp_messages)
def test_uadp_roundtrip(msg):
    assert uadp.decode(uadp.encode(msg)) == msg


@given(st.floats(width=32, allow_nan=False, allow_infinity=False))
def test_float_scalar_equality_by_bits(x):
    assume(not math.isnan(x))
    assert Scalar(DataType.FLOAT, x) == Scalar(DataType.FLOAT, DataType.FLOAT.unpack(DataType.FLOAT.pack(x)))


def test_split_for_pdu_on_314():
    jobs = s7.split_for_pdu(100, S7_314)
    assert [j.items[0].length // 4 for j in jobs] == [50, 50]
    assert [j.items[0].start for j in jobs] == [0, 200]
    assert s7.values_per_pdu(240) == 55


@given(st.integers(1, 1000), st.sampled_from([240, 480, 960]))
def test_split_counts_properties(n, pdu):
    counts = s7.split_counts(n, pdu)
    assert sum(counts) == n
    assert max(counts) - min(counts) <= 1
    assert max(counts) <= s7.values_per_pdu(pdu)
    assert len(counts) == math.ceil(n / s7.values_per_pdu(pdu))


def test_read_node_ids_are_addressable():
    for i in (1, 9, 10, 11, 99, 100):
        assert opcua.node_index(opcua.read_node_id(i)) == i
        assert opcua.node_index(opcua.write_node_id(i)) == i
