"""Edge-side measurement of update times.

Push interfaces (OUC, UADP, OPC UA Write) are received; pull interfaces (S7,
OPC UA Read) are polled back to back. Either way the run records one arrival
timestamp per completed exchange, taken from the kernel receive stamp when the
platform offers it.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import socket
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .codecs import opcua, ouc, s7, uadp
from .codecs.common import DataType
from .emulator import (EmulatorConfig, Endpoints, OpcUaWriteEndpoint, OucTcpEndpoint, OucUdpEndpoint,
                       PubSubConfig, PubSubEndpoint, spawn)
from .errors import ConnectionFailed, InsufficientSamples, InvalidConfig, Malformed, MeasurementTimeout
from .net import enable_rx_timestamps, is_multicast, recv_datagram, recv_exact, recv_framed
from .profiles import Interface, PlcProfile

MIN_SAMPLES = 100
DEFAULT_WARMUP = 50


@dataclass(frozen=True)
class MeasurementRun:
    interface: Interface
    device: str
    n: int
    samples_us: tuple[float, ...]       # arrival times relative to the first sample
    warmup_count: int = 0
    duration_s: float = 0.0
    timestamp_source: str = "replay"

    def __post_init__(self) -> None:
        if self.warmup_count < 0:
            raise ValueError("warmup_count must be >= 0")
        if any(b <= a for a, b in zip(self.samples_us, self.samples_us[1:])):
            raise ValueError("arrival timestamps must be strictly increasing")

    @classmethod
    def replay(cls, timestamps_ms: Sequence[float], interface: Interface | str = Interface.OUC_UDP,
               device: str = "replay", n: int = 1, warmup: int = 0) -> "MeasurementRun":
        """A run built from recorded or synthetic timestamps (milliseconds)."""
        iface = Interface.parse(interface) if isinstance(interface, str) else interface
        return cls(iface, device, n, tuple(t * 1000.0 for t in timestamps_ms), warmup)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# interface={self.interface.value} device={self.device} n={self.n} "
                  f"warmup={self.warmup_count} source={self.timestamp_source}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["index", "timestamp_us"])
        writer.writerows((i, f"{t:.3f}") for i, t in enumerate(self.samples_us))
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementRun":
        lines = text.splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            meta = dict(part.split("=", 1) for part in lines[0][1:].split())
            lines = lines[1:]
        try:
            rows = list(csv.DictReader(lines))
            stamps = tuple(float(r["timestamp_us"]) for r in rows)
            return cls(Interface.parse(meta.get("interface", "ouc-udp")), meta.get("device", "replay"),
                       int(meta.get("n", 1)), stamps, int(meta.get("warmup", 0)),
                       timestamp_source=meta.get("source", "replay"))
        except (KeyError, ValueError) as exc:
            raise InvalidConfig(f"not a measurement CSV: {exc}") from exc


@dataclass(frozen=True)
class UpdateTimeStats:
    min: float
    mean: float
    p50: float
    p99: float
    sample_count: int
    interface: str | None = None
    device: str | None = None
    n: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def gaps_ms(run: MeasurementRun) -> np.ndarray:
    stamps = np.asarray(run.samples_us[run.warmup_count:], dtype=float)
    return np.diff(stamps) / 1000.0


def summarize(run: MeasurementRun) -> UpdateTimeStats:
    if len(run.samples_us) - run.warmup_count < 2:
        raise InsufficientSamples(f"{len(run.samples_us)} samples with {run.warmup_count} warmup leave no gap")
    gaps = gaps_ms(run)
    p50, p99 = np.percentile(gaps, [50, 99])
    return UpdateTimeStats(float(gaps.min()), float(gaps.mean()), float(p50), float(p99), int(gaps.size),
                           run.interface.value, run.device, run.n)


# -- receivers and pollers ----------------------------------------------------------


class _Source:
    """Yields one arrival timestamp (seconds) per completed exchange."""

    kernel_stamps = False

    def arrivals(self) -> Iterator[float]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _udp_socket(bind: tuple[str, int], timeout: float) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    host, port = bind
    if is_multicast(host):
        sock.bind(("", port))
        mreq = socket.inet_aton(host) + socket.inet_aton("0.0.0.0")
        sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, mreq)
    else:
        sock.bind(bind)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
    sock.settimeout(timeout)
    return sock


def _connect(endpoint: tuple[str, int], timeout: float) -> socket.socket:
    try:
        sock = socket.create_connection(endpoint, timeout=timeout)
    except OSError as exc:
        raise ConnectionFailed(f"cannot connect to {endpoint[0]}:{endpoint[1]}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


class OucUdpReceiver(_Source):
    def __init__(self, bind: tuple[str, int], n: int, timeout: float = 5.0, byte_order: str = "big"):
        self.sock = _udp_socket(bind, timeout)
        self.kernel_stamps = enable_rx_timestamps(self.sock)
        self.address = self.sock.getsockname()
        self.layout = ouc.OucLayout(DataType.INT32, byte_order, n)

    def arrivals(self) -> Iterator[float]:
        while True:
            data, _addr, stamp = recv_datagram(self.sock)
            ouc.decode(data, self.layout)
            yield stamp

    def close(self) -> None:
        self.sock.close()


class UadpReceiver(OucUdpReceiver):
    def __init__(self, bind: tuple[str, int], n: int, timeout: float = 5.0):
        super().__init__(bind, n, timeout)
        self.n = n

    def arrivals(self) -> Iterator[float]:
        while True:
            data, _addr, stamp = recv_datagram(self.sock)
            msg = uadp.decode(data)
            if len(msg.values) != self.n:
                raise Malformed(f"expected {self.n} values, got {len(msg.values)}")
            yield stamp


class OucTcpReceiver(_Source):
    def __init__(self, endpoint: tuple[str, int], n: int, timeout: float = 5.0, byte_order: str = "big"):
        self.sock = _connect(endpoint, timeout)
        self.kernel_stamps = enable_rx_timestamps(self.sock)
        self.layout = ouc.OucLayout(DataType.INT32, byte_order, n)

    def arrivals(self) -> Iterator[float]:
        size = 4 * self.layout.count
        while True:
            data, stamp = recv_exact(self.sock, size)
            ouc.decode(data, self.layout)
            yield stamp

    def close(self) -> None:
        self.sock.close()


class OpcUaWriteReceiver(_Source):
    """Plays the OPC UA server that the PLC pushes Write requests to."""

    def __init__(self, bind: tuple[str, int], n: int, timeout: float = 5.0):
        self.listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.listener.bind(bind)
        self.listener.listen(1)
        self.listener.settimeout(timeout)
        self.address = self.listener.getsockname()
        self.timeout = timeout
        self.n = n
        self.conn: socket.socket | None = None

    def arrivals(self) -> Iterator[float]:
        try:
            self.conn, _ = self.listener.accept()
        except socket.timeout:
            raise MeasurementTimeout("no OPC UA client connected") from None
        self.conn.settimeout(self.timeout)
        self.conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.kernel_stamps = enable_rx_timestamps(self.conn)
        seq = itertools.count(1)
        while True:
            chunk, stamp = recv_framed(self.conn, opcua.CHUNK_HEADER, opcua.chunk_length)
            req = opcua.decode(chunk)
            if not isinstance(req, opcua.WriteRequest) or len(req.nodes) != self.n:
                raise Malformed(f"expected a WriteRequest of {self.n} values")
            ch = opcua.Channel(req.channel.channel_id, req.channel.token_id, next(seq), req.channel.request_id)
            reply = opcua.WriteResponse((opcua.GOOD,) * len(req.nodes),
                                        opcua.ResponseHeader(0, req.header.request_handle), ch)
            self.conn.sendall(opcua.encode(reply))
            yield stamp

    def close(self) -> None:
        if self.conn is not None:
            self.conn.close()
        self.listener.close()


class S7Poller(_Source):
    def __init__(self, endpoint: tuple[str, int], n: int, timeout: float = 5.0, pdu_request: int = 960):
        self.sock = _connect(endpoint, timeout)
        self.kernel_stamps = enable_rx_timestamps(self.sock)
        self.n = n
        self._exchange(s7.CotpConnect(False))
        setup = self._exchange(s7.S7Setup(s7.S7Kind.JOB, 0, pdu_request))
        if not isinstance(setup, s7.S7Setup) or setup.error_class:
            raise ConnectionFailed("S7 setup communication refused")
        self.pdu_length = setup.pdu_length

    def _exchange(self, msg):
        self.sock.sendall(s7.encode(msg))
        frame, _ = recv_framed(self.sock, s7.TPKT_HEADER, s7.tpkt_length)
        return s7.decode(frame)

    def read_once(self, ref: int = 1) -> tuple[bytes, float]:
        """One complete read of ``n`` values; returns the bytes and the last arrival stamp."""
        values, stamp = [], 0.0
        for job in s7.split_for_pdu(self.n, self.pdu_length, pdu_ref=ref):
            self.sock.sendall(s7.encode(job))
            expected = job.items[0].length
            got = 0
            while got < expected:
                frame, stamp = recv_framed(self.sock, s7.TPKT_HEADER, s7.tpkt_length)
                ack = s7.decode(frame)
                if ack.error_class or any(d.return_code != s7.RETURN_SUCCESS for d in ack.data):
                    raise Malformed(f"S7 read failed: {ack}")
                values.append(ack.value_bytes)
                got += len(ack.value_bytes)
        return b"".join(values), stamp

    def arrivals(self) -> Iterator[float]:
        for ref in itertools.count(1):
            yield self.read_once(ref & 0xFFFF)[1]

    def close(self) -> None:
        self.sock.close()


class OpcUaReadPoller(_Source):
    def __init__(self, endpoint: tuple[str, int], n: int, timeout: float = 5.0):
        self.sock = _connect(endpoint, timeout)
        self.kernel_stamps = enable_rx_timestamps(self.sock)
        self.nodes = tuple(opcua.read_node_id(i) for i in range(1, n + 1))

    def read_once(self, handle: int = 1) -> tuple[opcua.ReadResponse, float]:
        req = opcua.ReadRequest(self.nodes, opcua.RequestHeader(request_handle=handle),
                                opcua.Channel(sequence_number=handle, request_id=handle))
        self.sock.sendall(opcua.encode(req))
        chunk, stamp = recv_framed(self.sock, opcua.CHUNK_HEADER, opcua.chunk_length)
        resp = opcua.decode(chunk)
        if not isinstance(resp, opcua.ReadResponse) or len(resp.results) != len(self.nodes):
            raise Malformed("unexpected OPC UA read reply")
        return resp, stamp

    def arrivals(self) -> Iterator[float]:
        for handle in itertools.count(1):
            yield self.read_once(handle)[1]

    def close(self) -> None:
        self.sock.close()


PUSH = frozenset({Interface.OUC_UDP, Interface.UADP, Interface.OPCUA_WRITE})


def open_source(interface: Interface, endpoint: tuple[str, int], n: int, timeout: float = 5.0) -> _Source:
    """For push interfaces ``endpoint`` is the local address to receive on,
    otherwise the device address to connect to."""
    sources = {
        Interface.OUC_UDP: OucUdpReceiver, Interface.UADP: UadpReceiver,
        Interface.OPCUA_WRITE: OpcUaWriteReceiver, Interface.OUC_TCP: OucTcpReceiver,
        Interface.S7: S7Poller, Interface.OPCUA_READ: OpcUaReadPoller,
    }
    return sources[interface](endpoint, n, timeout)


def collect(source: _Source, interface: Interface, n: int, count: int, warmup: int = DEFAULT_WARMUP,
            device: str = "remote") -> MeasurementRun:
    if count < MIN_SAMPLES:
        raise InvalidConfig(f"count must be at least {MIN_SAMPLES}")
    started = time.perf_counter()
    stamps = list(itertools.islice(source.arrivals(), warmup + count))
    first = stamps[0]
    return MeasurementRun(interface, device, n, tuple((t - first) * 1e6 for t in stamps), warmup,
                          time.perf_counter() - started, "kernel" if source.kernel_stamps else "application")


def run_measurement(interface: Interface | str, endpoint: tuple[str, int], n: int, count: int, *,
                    warmup: int = DEFAULT_WARMUP, timeout: float = 5.0, device: str = "remote") -> MeasurementRun:
    iface = Interface.parse(interface) if isinstance(interface, str) else interface
    with open_source(iface, endpoint, n, timeout) as source:
        return collect(source, iface, n, count, warmup, device)


def _loopback_endpoints(interface: Interface, n: int, profile: PlcProfile, peer: tuple[str, int] | None) -> Endpoints:
    if interface is Interface.OUC_UDP:
        return Endpoints(ouc_udp=OucUdpEndpoint(peer, n))
    if interface is Interface.OUC_TCP:
        return Endpoints(ouc_tcp=OucTcpEndpoint(0, "127.0.0.1", n))
    if interface is Interface.OPCUA_WRITE:
        return Endpoints(opcua_write=OpcUaWriteEndpoint(peer, n))
    if interface is Interface.UADP:
        interval = profile.update_time(Interface.UADP, n)
        return Endpoints(pubsub=PubSubEndpoint(PubSubConfig.single(n, interval), peer))
    if interface is Interface.S7:
        return Endpoints(s7_port=0)
    return Endpoints(opcua_port=0)


_PORT_NAMES = {Interface.S7: "s7", Interface.OPCUA_READ: "opcua", Interface.OUC_TCP: "ouc_tcp"}


def measure_loopback(profile: PlcProfile, interface: Interface | str, n: int, count: int, *,
                     warmup: int = DEFAULT_WARMUP, jitter: float = 0.02, seed: int | None = None,
                     timeout: float = 5.0) -> MeasurementRun:
    """Start an emulator in a child process and measure one interface against it."""
    iface = Interface.parse(interface) if isinstance(interface, str) else interface
    profile.require(iface)
    device = profile.model.value
    if iface in PUSH:
        with open_source(iface, ("127.0.0.1", 0), n, timeout) as source:
            cfg = EmulatorConfig(profile, _loopback_endpoints(iface, n, profile, source.address), jitter=jitter,
                                 seed=seed)
            with spawn(cfg):
                return collect(source, iface, n, count, warmup, device)
    cfg = EmulatorConfig(profile, _loopback_endpoints(iface, n, profile, None), jitter=jitter, seed=seed)
    with spawn(cfg) as emu:
        endpoint = ("127.0.0.1", emu.ports[_PORT_NAMES[iface]])
        with open_source(iface, endpoint, n, timeout) as source:
            return collect(source, iface, n, count, warmup, device)


def write_run(run: MeasurementRun, directory: Path, stem: str | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (timestamps) and ``<stem>.json`` (stats)."""
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{run.interface.value}_{run.device}_n{run.n}"
    csv_path, json_path = directory / f"{stem}.csv", directory / f"{stem}.json"
    csv_path.write_text(run.to_csv())
    json_path.write_text(summarize(run).to_json())
    return csv_path, json_path
