"""Frame arithmetic: header stacks, minimum-frame padding, message sizes, protocol efficiency.

Every message size is derived from the application bytes a codec puts on the
wire plus the transport below it:

* UDP: one Ethernet frame of ``max(app + 28, 46) + 26`` bytes.
* TCP: the application bytes are cut into MSS-sized segments; each segment
  costs its own frame plus one 72-byte acknowledge frame.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .codecs.common import VALUE_SIZE
from .codecs.s7 import split_counts
from .errors import UnknownMessageName
from .profiles import BUCKETS, Device, Interface, PlcProfile


@dataclass(frozen=True)
class HeaderStack:
    ethernet_overhead: int = 26     # 14 header + 4 FCS + 8 preamble/SFD
    ip_header: int = 20
    l4_header: int = 8
    min_l3_payload: int = 46
    mss: int = 1460
    protocol: str = "udp"

    @property
    def l3_overhead(self) -> int:
        return self.ip_header + self.l4_header


UDP = HeaderStack(l4_header=8, protocol="udp")
TCP = HeaderStack(l4_header=20, protocol="tcp")


def ethernet_frame_size(l3_bytes: int, stack: HeaderStack = UDP) -> int:
    """Bytes on the wire for an IP packet of ``l3_bytes``, padding included."""
    if l3_bytes < 0:
        raise ValueError("l3_bytes must be >= 0")
    return max(l3_bytes, stack.min_l3_payload) + stack.ethernet_overhead


def tcp_ack_size(stack: HeaderStack = TCP) -> int:
    return ethernet_frame_size(stack.l3_overhead, stack)


ACK_SIZE = tcp_ack_size()


def tcp_segments(app_bytes: int, stack: HeaderStack = TCP) -> list[int]:
    if app_bytes <= 0:
        return [0]
    full, rest = divmod(app_bytes, stack.mss)
    return [stack.mss] * full + ([rest] if rest else [])


def wire_size(app_bytes: int, stack: HeaderStack) -> int:
    """Total bytes exchanged to deliver ``app_bytes`` over ``stack``."""
    if stack.protocol == "udp":
        return ethernet_frame_size(app_bytes + stack.l3_overhead, stack)
    return sum(ethernet_frame_size(seg + stack.l3_overhead, stack) + tcp_ack_size(stack)
               for seg in tcp_segments(app_bytes, stack))


@dataclass(frozen=True)
class MessageLayout:
    interface: Interface
    message_name: str
    stack: HeaderStack
    fixed_overhead: int = 0            # application bytes independent of n
    per_value_overhead: int = 0        # application bytes per value besides the value itself
    payload_per_value: int = VALUE_SIZE
    size_table: Mapping[int, int] = field(default_factory=dict)   # Table of measured sizes, n -> bytes
    # piecewise-linear (n, application bytes) anchors for non-affine layouts
    app_anchors: tuple[tuple[int, int], ...] = ()

    def app_size(self, n: int) -> int:
        if self.app_anchors:
            pts = self.app_anchors
            for (n0, b0), (n1, b1) in zip(pts, pts[1:]):
                if n <= n1:
                    return b0 + (b1 - b0) * (n - n0) // (n1 - n0)
            (n0, b0), (n1, b1) = pts[-2:]
            return b1 + (b1 - b0) * (n - n1) // (n1 - n0)
        return self.fixed_overhead + (self.per_value_overhead + self.payload_per_value) * n


def _table(a: int, b: int, c: int) -> dict[int, int]:
    return dict(zip(BUCKETS, (a, b, c)))


LAYOUTS: dict[str, MessageLayout] = {m.message_name: m for m in (
    MessageLayout(Interface.OUC_UDP, "UDP_Data", UDP, size_table=_table(72, 94, 454)),
    MessageLayout(Interface.OUC_TCP, "TCP_Data", TCP, size_table=_table(144, 178, 538)),
    MessageLayout(Interface.S7, "Job", TCP, fixed_overhead=31, payload_per_value=0,
                  size_table=_table(169, 169, 169)),
    MessageLayout(Interface.S7, "Ack_Data", TCP, fixed_overhead=25, size_table=_table(167, 203, 563)),
    MessageLayout(Interface.OPCUA_WRITE, "WriteRequest", TCP, fixed_overhead=78, per_value_overhead=14,
                  size_table=_table(234, 396, 2154)),
    MessageLayout(Interface.OPCUA_WRITE, "WriteResponse", TCP, fixed_overhead=60, per_value_overhead=4,
                  payload_per_value=0, size_table=_table(202, 238, 598)),
    MessageLayout(Interface.OPCUA_READ, "ReadRequest", TCP, fixed_overhead=90, payload_per_value=0,
                  size_table=_table(270, 756, 5778),
                  app_anchors=((0, 90), (1, 132), (10, 618), (100, 5226))),
    MessageLayout(Interface.OPCUA_READ, "ReadResponse", TCP, fixed_overhead=60, per_value_overhead=10,
                  size_table=_table(212, 338, 1598)),
    MessageLayout(Interface.UADP, "DataSetMessage", UDP, fixed_overhead=14, per_value_overhead=1,
                  size_table=_table(73, 118, 568)),
)}


def get_layout(name: str | MessageLayout) -> MessageLayout:
    if isinstance(name, MessageLayout):
        return name
    try:
        return LAYOUTS[name]
    except KeyError:
        raise UnknownMessageName(name) from None


def message_size(layout: str | MessageLayout, n: int) -> int:
    """On-the-wire size of one message carrying ``n`` 4-byte values."""
    layout = get_layout(layout)
    if n < 1:
        raise ValueError("n must be >= 1")
    return wire_size(layout.app_size(n), layout.stack)


class Direction(str, enum.Enum):
    PLC_TO_EDGE = "plc->edge"
    EDGE_TO_PLC = "edge->plc"


@dataclass(frozen=True)
class ExchangePattern:
    messages: tuple[tuple[str, Direction], ...]
    includes_tcp_ack: bool
    ack_size: int | None = None


@dataclass(frozen=True)
class InterfaceInfo:
    id: Interface
    label: str
    protocol: str
    plug_and_play: bool
    metadata: str          # "+", "-" or "o" (partial)
    pattern: ExchangePattern


def _pattern(*messages: tuple[str, Direction], tcp: bool) -> ExchangePattern:
    return ExchangePattern(tuple(messages), tcp, ACK_SIZE if tcp else None)


_P2E, _E2P = Direction.PLC_TO_EDGE, Direction.EDGE_TO_PLC

INTERFACES: dict[Interface, InterfaceInfo] = {s.id: s for s in (
    InterfaceInfo(Interface.OUC_UDP, "Open User Communication", "UDP", False, "-",
                  _pattern(("UDP_Data", _P2E), tcp=False)),
    InterfaceInfo(Interface.OUC_TCP, "Open User Communication", "TCP", False, "-",
                  _pattern(("TCP_Data", _P2E), tcp=True)),
    InterfaceInfo(Interface.S7, "LIBNODAVE", "ISO on TCP", True, "-",
                  _pattern(("Job", _E2P), ("Ack_Data", _P2E), tcp=True)),
    InterfaceInfo(Interface.OPCUA_WRITE, "OPC UA Write Service", "UATCP", False, "+",
                  _pattern(("WriteRequest", _P2E), ("WriteResponse", _E2P), tcp=True)),
    InterfaceInfo(Interface.OPCUA_READ, "OPC UA Read Service", "UATCP", True, "+",
                  _pattern(("ReadRequest", _E2P), ("ReadResponse", _P2E), tcp=True)),
    InterfaceInfo(Interface.UADP, "OPC UA PubSub", "UADP", False, "o",
                  _pattern(("DataSetMessage", _P2E), tcp=False)),
)}


def requests_per_exchange(interface: Interface, n: int, device: PlcProfile) -> list[int]:
    """Values carried by each request/response pair needed for ``n`` values."""
    if interface is Interface.S7:
        return split_counts(n, device.pdu_limit)
    return [n]


def exchange_total_bytes(interface: Interface, n: int, device: PlcProfile) -> int:
    """All bytes on the wire for one complete exchange of ``n`` values."""
    if n < 1:
        raise ValueError("n must be >= 1")
    device.require(interface)
    pattern = INTERFACES[interface].pattern
    return sum(message_size(name, m) for m in requests_per_exchange(interface, n, device)
               for name, _ in pattern.messages)


def protocol_efficiency(interface: Interface, n: int, device: PlcProfile,
                        accounting: str = "table") -> Fraction:
    """Payload bytes over total bytes of one exchange.

    ``accounting="table"`` charges every request of a split S7 exchange the
    full single-request exchange, which halves the efficiency when two
    requests are needed. ``accounting="wire"`` divides by the bytes actually
    sent.
    """
    payload = VALUE_SIZE * n
    if accounting == "wire":
        return Fraction(payload, exchange_total_bytes(interface, n, device))
    if accounting != "table":
        raise ValueError(f"unknown accounting {accounting!r}")
    return Fraction(payload, _accounted_bytes(interface, n, device))


def _accounted_bytes(interface: Interface, n: int, device: PlcProfile) -> int:
    device.require(interface)
    requests = len(requests_per_exchange(interface, n, device))
    single = sum(message_size(name, n) for name, _ in INTERFACES[interface].pattern.messages)
    return requests * single


def table_percent(value: Fraction | float) -> Decimal:
    """Percent with one decimal as printed in the comparison table.

    The value is rounded half-up to hundredths of a percent first and then to
    tenths; for 400/538 this gives 74.4 where a single rounding gives 74.3.
    """
    with localcontext() as ctx:
        ctx.prec = 50
        frac = Fraction(value)
        pct = Decimal(frac.numerator * 100) / Decimal(frac.denominator)
        return pct.quantize(Decimal("0.01"), ROUND_HALF_UP).quantize(Decimal("0.1"), ROUND_HALF_UP)


def single_round_percent(value: Fraction | float) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 50
        frac = Fraction(value)
        pct = Decimal(frac.numerator * 100) / Decimal(frac.denominator)
        return pct.quantize(Decimal("0.1"), ROUND_HALF_UP)


@dataclass(frozen=True)
class EfficiencyRow:
    interface: Interface
    device: Device
    n: int
    efficiency: Fraction
    total_bytes: int          # bytes on the wire
    payload_bytes: int
    accounted_bytes: int      # denominator of ``efficiency``
    requests: int = 1
    estimated: bool = False
    update_time_ms: float | None = None

    @property
    def efficiency_pct(self) -> Decimal:
        return table_percent(self.efficiency)


@dataclass
class EfficiencyReport:
    rows: list[EfficiencyRow] = field(default_factory=list)

    COLUMNS = ("interface", "device", "n", "efficiency_pct", "total_bytes", "estimated_flag",
               "payload_bytes", "accounted_bytes", "requests", "update_time_ms")

    def cell(self, interface: Interface, device: Device, n: int) -> EfficiencyRow:
        for row in self.rows:
            if (row.interface, row.device, row.n) == (interface, device, n):
                return row
        raise KeyError((interface, device, n))

    def records(self) -> list[dict]:
        return [{
            "interface": r.interface.value, "device": r.device.short, "n": r.n,
            "efficiency_pct": str(r.efficiency_pct), "total_bytes": r.total_bytes,
            "estimated_flag": int(r.estimated), "payload_bytes": r.payload_bytes,
            "accounted_bytes": r.accounted_bytes, "requests": r.requests,
            "update_time_ms": "" if r.update_time_ms is None else f"{r.update_time_ms:.2f}",
        } for r in self.rows]

    def to_csv(self) -> str:
        return records_to_csv(self.COLUMNS, self.records())

    def to_markdown(self) -> str:
        return records_to_markdown(self.COLUMNS, self.records())


def records_to_csv(columns: Sequence[str], records: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(records)
    return buf.getvalue()


def records_to_markdown(columns: Sequence[str], records: Iterable[dict]) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for rec in records:
        lines.append("| " + " | ".join(str(rec[c]) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def build_table1(profiles: Sequence[PlcProfile], interfaces: Sequence[Interface] | None = None,
                 ns: Sequence[int] = BUCKETS) -> EfficiencyReport:
    """Efficiency rows for every supported (interface, device, n)."""
    interfaces = list(Interface) if interfaces is None else list(interfaces)
    report = EfficiencyReport()
    for interface in interfaces:
        for profile in profiles:
            if interface not in profile.supports:
                continue
            for n in ns:
                requests = len(requests_per_exchange(interface, n, profile))
                report.rows.append(EfficiencyRow(
                    interface=interface,
                    device=profile.model,
                    n=n,
                    efficiency=protocol_efficiency(interface, n, profile),
                    total_bytes=exchange_total_bytes(interface, n, profile),
                    payload_bytes=VALUE_SIZE * n,
                    accounted_bytes=_accounted_bytes(interface, n, profile),
                    requests=requests,
                    estimated=profile.is_estimated(interface, n),
                    update_time_ms=profile.update_time(interface, n),
                ))
    return report


@dataclass(frozen=True)
class SizeRow:
    interface: Interface
    message_name: str
    n: int
    size_bytes: int
    app_bytes: int
    segments: int


def build_table2(ns: Sequence[int] = BUCKETS, names: Iterable[str] | None = None) -> list[SizeRow]:
    rows = []
    for name in (LAYOUTS if names is None else names):
        layout = get_layout(name)
        for n in ns:
            app = layout.app_size(n)
            segs = len(tcp_segments(app, layout.stack)) if layout.stack.protocol == "tcp" else 1
            rows.append(SizeRow(layout.interface, layout.message_name, n, message_size(layout, n), app, segs))
    return rows


def size_rows_records(rows: Iterable[SizeRow]) -> list[dict]:
    return [{"interface": r.interface.value, "message": r.message_name, "n": r.n, "size_bytes": r.size_bytes,
             "app_bytes": r.app_bytes, "segments": r.segments} for r in rows]


SIZE_COLUMNS = ("interface", "message", "n", "size_bytes", "app_bytes", "segments")

