"""Randomised codec round-trips and encoded-size checks against the frame model."""
from __future__ import annotations

import random
import uuid
from dataclasses import dataclass, field

from . import frame_model
from .codecs import decode, encode, opcua, ouc, s7, uadp
from .codecs.common import DataType, Scalar
from .profiles import Interface

_INT_RANGE = {DataType.INT32: (-2**31, 2**31 - 1), DataType.UINT32: (0, 2**32 - 1)}


def random_scalar(rng: random.Random, dtype: DataType | None = None) -> Scalar:
    dtype = dtype or rng.choice(list(DataType))
    if dtype is DataType.FLOAT:
        return Scalar(dtype, rng.uniform(-1e6, 1e6))
    return Scalar(dtype, rng.randint(*_INT_RANGE[dtype]))


def random_ouc(rng: random.Random) -> ouc.OucPayload:
    dtype = rng.choice(list(DataType))
    values = [random_scalar(rng, dtype).value for _ in range(rng.randint(1, 100))]
    return ouc.OucPayload(tuple(values), dtype, rng.choice(["big", "little"]))


def random_s7(rng: random.Random):
    kind = rng.choice([s7.S7Kind.JOB, s7.S7Kind.ACK_DATA])
    ref = rng.randint(0, 0xFFFF)
    roll = rng.random()
    if roll < 0.1:
        return s7.CotpConnect(rng.random() < 0.5, rng.randint(0, 0xFFFF), rng.randint(0, 0xFFFF),
                              rng.randint(0, 0xFFFF), rng.randint(0, 0xFFFF), rng.randint(7, 13))
    if roll < 0.2:
        return s7.S7Setup(kind, ref, rng.randint(24, 960), rng.randint(1, 8), rng.randint(1, 8))
    if kind is s7.S7Kind.JOB:
        items = tuple(s7.ReadItem(rng.choice([s7.AREA_DB, s7.AREA_FLAGS]), rng.randint(0, 0xFFFF),
                                  rng.randint(0, 0xFFFF), rng.randint(0, 400)) for _ in range(rng.randint(1, 5)))
        return s7.S7Message(kind, ref, items=items)
    data = tuple(
        s7.DataItem(s7.RETURN_SUCCESS, rng.randbytes(rng.randint(1, 200))) if rng.random() < 0.8
        else s7.DataItem(rng.choice([s7.RETURN_ADDRESS_OUT_OF_RANGE, s7.RETURN_OBJECT_MISSING]))
        for _ in range(rng.randint(1, 5)))
    return s7.S7Message(kind, ref, data=data)


def _random_node(rng: random.Random) -> opcua.NodeId:
    ns = rng.choice([0, 1, 3, 300])
    roll = rng.random()
    if roll < 0.4:
        return opcua.NodeId(ns if ns < 256 else 0, rng.randint(0, 300))
    if roll < 0.6:
        return opcua.NodeId(ns, rng.randint(0, 2**32 - 1))
    if roll < 0.9:
        return opcua.NodeId(ns, "".join(rng.choice('abcDB"._0123456789') for _ in range(rng.randint(0, 40))))
    return opcua.NodeId(ns, uuid.UUID(int=rng.getrandbits(128)))


def _random_dv(rng: random.Random) -> opcua.DataValue:
    return opcua.DataValue(random_scalar(rng) if rng.random() < 0.9 else None,
                           rng.choice([None, opcua.GOOD, opcua.BAD_OUT_OF_RANGE]),
                           rng.choice([None, rng.randint(0, 2**62)]))


def random_opcua(rng: random.Random) -> opcua.OpcUaServiceMessage:
    count = rng.randint(0, 30)
    channel = opcua.Channel(*(rng.randint(0, 2**32 - 1) for _ in range(4)))
    req_header = opcua.RequestHeader(opcua.SESSION_TOKEN, rng.randint(0, 2**62), rng.randint(0, 2**32 - 1),
                                     rng.randint(0, 2**32 - 1))
    resp_header = opcua.ResponseHeader(rng.randint(0, 2**62), rng.randint(0, 2**32 - 1),
                                       rng.choice([opcua.GOOD, opcua.BAD_NODE_ID_UNKNOWN]))
    kind = rng.randrange(4)
    if kind == 0:
        return opcua.ReadRequest(tuple(_random_node(rng) for _ in range(count)), req_header, channel,
                                 rng.choice([0.0, 500.0]))
    if kind == 1:
        return opcua.ReadResponse(tuple(_random_dv(rng) for _ in range(count)), resp_header, channel)
    if kind == 2:
        return opcua.WriteRequest(tuple(opcua.WriteValue(_random_node(rng), _random_dv(rng))
                                        for _ in range(count)), req_header, channel)
    return opcua.WriteResponse(tuple(rng.choice([opcua.GOOD, opcua.BAD_TYPE_MISMATCH]) for _ in range(count)),
                               resp_header, channel)


def random_uadp(rng: random.Random) -> uadp.UadpNetworkMessage:
    messages = tuple(
        uadp.DataSetMessage(rng.randint(0, 0xFFFF), tuple(random_scalar(rng) for _ in range(rng.randint(1, 10))))
        for _ in range(rng.randint(1, 2)))
    return uadp.UadpNetworkMessage(rng.randint(0, 0xFFFF), messages, rng.randint(0, 0xFFFF))


GENERATORS = {
    Interface.OUC_UDP: random_ouc,
    Interface.S7: random_s7,
    Interface.OPCUA_READ: random_opcua,
    Interface.UADP: random_uadp,
}


def _decode_options(interface: Interface, msg) -> dict:
    if interface is Interface.OUC_UDP:
        return {"layout": ouc.OucLayout(msg.dtype, msg.byte_order, len(msg.values))}
    return {}


def roundtrip(interface: Interface, msg) -> bool:
    return decode(encode(msg), interface, **_decode_options(interface, msg)) == msg


# -- encoded sizes ---------------------------------------------------------------------


def sample_message(name: str, n: int):
    """The message the emulator and harness put on the wire for ``n`` values."""
    values = tuple(Scalar(DataType.INT32, i) for i in range(1, n + 1))
    if name in ("UDP_Data", "TCP_Data"):
        return ouc.OucPayload(tuple(v.value for v in values))
    if name == "Job":
        return s7.S7Message(s7.S7Kind.JOB, 1, items=(s7.ReadItem(length=4 * n),))
    if name == "Ack_Data":
        return s7.S7Message(s7.S7Kind.ACK_DATA, 1, data=(s7.DataItem(s7.RETURN_SUCCESS, bytes(4 * n)),))
    if name == "WriteRequest":
        return opcua.WriteRequest(tuple(opcua.WriteValue(opcua.write_node_id(i), opcua.DataValue(v))
                                        for i, v in enumerate(values, 1)))
    if name == "WriteResponse":
        return opcua.WriteResponse((opcua.GOOD,) * n)
    if name == "ReadRequest":
        return opcua.ReadRequest(tuple(opcua.read_node_id(i) for i in range(1, n + 1)))
    if name == "ReadResponse":
        return opcua.ReadResponse(tuple(opcua.DataValue(v, source_timestamp=0) for v in values))
    if name == "DataSetMessage":
        return uadp.UadpNetworkMessage(1, (uadp.DataSetMessage(1, values),))
    raise KeyError(name)


def encoded_size(name: str, n: int) -> int:
    layout = frame_model.get_layout(name)
    msg = sample_message(name, n)
    options = {"limits": None} if name == "DataSetMessage" else {}
    return frame_model.wire_size(len(encode(msg, **options)), layout.stack)


@dataclass
class SelftestReport:
    roundtrips: dict[str, int] = field(default_factory=dict)
    roundtrip_failures: list[str] = field(default_factory=list)
    size_checks: int = 0
    size_failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.roundtrip_failures and not self.size_failures

    def records(self) -> list[dict]:
        rows = [{"check": f"roundtrip {name}", "count": count,
                 "failures": sum(f.startswith(name + ":") for f in self.roundtrip_failures)}
                for name, count in self.roundtrips.items()]
        rows.append({"check": "encoded size vs frame model", "count": self.size_checks,
                     "failures": len(self.size_failures)})
        return rows


def run_selftest(count: int = 1000, seed: int = 0, ns: range = range(1, 101)) -> SelftestReport:
    rng = random.Random(seed)
    report = SelftestReport()
    for interface, make in GENERATORS.items():
        name = {Interface.OUC_UDP: "ouc", Interface.S7: "s7", Interface.OPCUA_READ: "opcua",
                Interface.UADP: "uadp"}[interface]
        report.roundtrips[name] = count
        for i in range(count):
            msg = make(rng)
            if not roundtrip(interface, msg):
                report.roundtrip_failures.append(f"{name}: message {i} {msg!r:.120}")
    for name in frame_model.LAYOUTS:
        for n in ns:
            report.size_checks += 1
            got, want = encoded_size(name, n), frame_model.message_size(name, n)
            if got != want:
                report.size_failures.append(f"{name} n={n}: encoded {got} B, model {want} B")
    return report
