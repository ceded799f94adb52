from __future__ import annotations

import errno
import itertools
import logging
import socket
import threading
import time
from dataclasses import dataclass, field

from ..codecs import opcua, s7, uadp
from ..codecs.common import VALUE_SIZE, DataType, Scalar
from ..errors import ConnectionFailed, InvalidConfig, LimitExceeded, Malformed, PlcBenchError, PortUnavailable
from ..net import is_multicast, parse_hostport, recv_framed
from ..profiles import Interface, PlcProfile, bucket, get_profile
from .pacing import Pacer
from .pubsub import AcceptedPubSub, PubSubConfig, WriterGroupConfig, configure_pubsub
from .store import DataBlockStore

log = logging.getLogger(__name__)

ERROR_CLASS_SERVICE = 0x84
ERROR_CODE_PDU_SIZE = 0x04
# 100 ns ticks between 1601-01-01 and the Unix epoch
_OPCUA_EPOCH_OFFSET = 116444736000000000


def opcua_now() -> int:
    return _OPCUA_EPOCH_OFFSET + time.time_ns() // 100


def _variable_offset(index: int) -> int:
    return VALUE_SIZE * (index - 1)


# -- endpoint configuration ---------------------------------------------------


@dataclass(frozen=True)
class OucUdpEndpoint:
    peer: tuple[str, int]
    n: int
    byte_order: str = "big"
    db: int = 1


@dataclass(frozen=True)
class OucTcpEndpoint:
    port: int
    peer_host: str
    n: int
    byte_order: str = "big"
    db: int = 1


@dataclass(frozen=True)
class OpcUaWriteEndpoint:
    target: tuple[str, int]
    n: int
    db: int = 1


@dataclass(frozen=True)
class PubSubEndpoint:
    config: PubSubConfig
    destination: tuple[str, int] = (uadp.UADP_MULTICAST, uadp.UADP_PORT)


@dataclass(frozen=True)
class Endpoints:
    """Which interfaces the emulator offers. ``None`` disables one; port 0 picks a free port."""

    host: str = "127.0.0.1"
    s7_port: int | None = None
    opcua_port: int | None = None
    ouc_udp: OucUdpEndpoint | None = None
    ouc_tcp: OucTcpEndpoint | None = None
    opcua_write: OpcUaWriteEndpoint | None = None
    pubsub: PubSubEndpoint | None = None

    @property
    def interfaces(self) -> list[Interface]:
        wanted = [(self.s7_port, Interface.S7), (self.opcua_port, Interface.OPCUA_READ),
                  (self.ouc_udp, Interface.OUC_UDP), (self.ouc_tcp, Interface.OUC_TCP),
                  (self.opcua_write, Interface.OPCUA_WRITE), (self.pubsub, Interface.UADP)]
        return [iface for cfg, iface in wanted if cfg is not None]

    def listening_ports(self) -> dict[str, int]:
        ports = {"s7": self.s7_port, "opcua": self.opcua_port,
                 "ouc_tcp": self.ouc_tcp.port if self.ouc_tcp else None}
        return {name: port for name, port in ports.items() if port is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "Endpoints":
        try:
            kw: dict = {"host": data.get("host", "127.0.0.1")}
            if "s7" in data:
                kw["s7_port"] = int(data["s7"].get("port", s7.S7_PORT))
            if "opcua" in data:
                kw["opcua_port"] = int(data["opcua"].get("port", opcua.OPCUA_PORT))
            if "ouc_udp" in data:
                d = data["ouc_udp"]
                kw["ouc_udp"] = OucUdpEndpoint(parse_hostport(d["peer"]), int(d["n"]),
                                               d.get("byte_order", "big"), int(d.get("db", 1)))
            if "ouc_tcp" in data:
                d = data["ouc_tcp"]
                kw["ouc_tcp"] = OucTcpEndpoint(int(d["port"]), d["peer"], int(d["n"]),
                                               d.get("byte_order", "big"), int(d.get("db", 1)))
            if "opcua_write" in data:
                d = data["opcua_write"]
                kw["opcua_write"] = OpcUaWriteEndpoint(parse_hostport(d["target"]), int(d["n"]),
                                                       int(d.get("db", 1)))
            if "pubsub" in data:
                d = data["pubsub"]
                dest = parse_hostport(d.get("destination", uadp.UADP_MULTICAST), uadp.UADP_PORT)
                kw["pubsub"] = PubSubEndpoint(PubSubConfig.from_dict(d), dest)
            return cls(**kw)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad endpoint config: {exc}") from exc


@dataclass(frozen=True)
class EmulatorConfig:
    profile: PlcProfile
    endpoints: Endpoints = field(default_factory=Endpoints)
    data_blocks: dict[int, int] = field(default_factory=lambda: {1: 1024})
    jitter: float = 0.02
    seed: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "EmulatorConfig":
        if "profile" not in data:
            raise InvalidConfig("emulator config needs a profile")
        try:
            blocks = {int(db): int(size) for db, size in data.get("data_blocks", {"1": 1024}).items()}
            return cls(get_profile(data["profile"]), Endpoints.from_dict(data.get("endpoints", {})),
                       blocks, float(data.get("jitter", 0.02)), data.get("seed"))
        except (TypeError, ValueError, AttributeError) as exc:
            raise InvalidConfig(f"bad emulator config: {exc}") from exc


# -- S7 request handling ----------------------------------------------------------


def handle_s7_read(job: s7.S7Message, profile: PlcProfile, store: DataBlockStore,
                   pdu_limit: int | None = None) -> list[s7.S7Message]:
    """Answer a read Job, splitting into several Ack_Data when the PDU is too small."""
    pdu_limit = profile.pdu_limit if pdu_limit is None else min(pdu_limit, profile.pdu_limit)
    ref = job.pdu_ref
    if not job.items:
        return [s7.S7Message(s7.S7Kind.ACK_DATA, ref, error_class=ERROR_CLASS_SERVICE,
                             error_code=ERROR_CODE_PDU_SIZE)]

    def item_result(item: s7.ReadItem, raw: bytes | None) -> s7.DataItem:
        if item.area != s7.AREA_DB:
            return s7.DataItem(s7.RETURN_OBJECT_MISSING)
        if raw is None:
            return s7.DataItem(s7.RETURN_ADDRESS_OUT_OF_RANGE)
        return s7.DataItem(s7.RETURN_SUCCESS, raw)

    raws = store.read_many([(i.db_number, i.start, i.length) for i in job.items])
    results = tuple(item_result(i, raw) for i, raw in zip(job.items, raws))
    ack = s7.S7Message(s7.S7Kind.ACK_DATA, ref, data=results)
    try:
        s7.encode(ack, pdu_limit=pdu_limit)
        return [ack]
    except LimitExceeded:
        if len(results) > 1:
            return [s7.S7Message(s7.S7Kind.ACK_DATA, ref, error_class=ERROR_CLASS_SERVICE,
                                 error_code=ERROR_CODE_PDU_SIZE)]
    data = results[0].data
    unit = VALUE_SIZE if len(data) % VALUE_SIZE == 0 else 1
    out, pos = [], 0
    for count in s7.split_counts(len(data) // unit, pdu_limit, unit):
        chunk = data[pos:pos + count * unit]
        out.append(s7.S7Message(s7.S7Kind.ACK_DATA, ref, data=(s7.DataItem(s7.RETURN_SUCCESS, chunk),)))
        pos += count * unit
    return out


def s7_response_interval(profile: PlcProfile, job: s7.S7Message) -> float:
    """Seconds between consecutive Ack_Data answering Jobs of this size.

    An exchange of m values takes ``T(m)``; when the device needs several
    requests for it, each one gets an equal share.
    """
    values = max(1, sum(i.length for i in job.items) // VALUE_SIZE)
    b = bucket(values)
    requests = len(s7.split_counts(b, profile.pdu_limit))
    return profile.update_time(Interface.S7, values) / requests / 1000


# -- running emulator ------------------------------------------------------------------


def _listen(host: str, port: int, kind: int = socket.SOCK_STREAM) -> socket.socket:
    sock = socket.socket(socket.AF_INET, kind)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        if exc.errno in (errno.EADDRINUSE, errno.EACCES, errno.EADDRNOTAVAIL):
            raise PortUnavailable(f"cannot bind {host}:{port}: {exc.strerror}") from exc
        raise
    if kind == socket.SOCK_STREAM:
        sock.listen(8)
        sock.settimeout(0.2)
    return sock


def _nodelay(sock: socket.socket) -> None:
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


class Emulator:
    """A running software PLC. Build one with :func:`serve`."""

    def __init__(self, profile: PlcProfile, store: DataBlockStore, endpoints: Endpoints,
                 jitter: float = 0.02, seed: int | None = None):
        self.profile = profile
        self.store = store
        self.endpoints = endpoints
        self.ports: dict[str, int] = {}
        self.pubsub: AcceptedPubSub | None = None
        self.rejected_peers = 0
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._sockets: set[socket.socket] = set()
        self._sock_lock = threading.Lock()
        seeds = itertools.count(seed) if seed is not None else itertools.repeat(None)
        self.pacers = {iface: Pacer(jitter, next(seeds)) for iface in Interface}
        self._group_pacers: dict[int, Pacer] = {}
        self._jitter, self._seeds = jitter, seeds

    # lifecycle

    @property
    def running(self) -> bool:
        return not self._stop.is_set() and any(t.is_alive() for t in self._threads)

    def _spawn(self, target, *args, name: str) -> None:
        thread = threading.Thread(target=self._guard, args=(target, *args), name=name, daemon=True)
        self._threads.append(thread)
        thread.start()

    def _guard(self, target, *args) -> None:
        try:
            target(*args)
        except (OSError, PlcBenchError) as exc:
            if not self._stop.is_set():
                log.warning("%s stopped: %s", threading.current_thread().name, exc)

    def _track(self, sock: socket.socket) -> socket.socket:
        with self._sock_lock:
            self._sockets.add(sock)
        return sock

    def _untrack(self, sock: socket.socket) -> None:
        with self._sock_lock:
            self._sockets.discard(sock)
        sock.close()

    def stop(self, timeout: float = 2.0) -> None:
        self._stop.set()
        with self._sock_lock:
            for sock in list(self._sockets):
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                sock.close()
        for thread in self._threads:
            thread.join(timeout)

    def __enter__(self) -> "Emulator":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # startup

    def start(self) -> None:
        ep = self.endpoints
        ports = ep.listening_ports()
        nonzero = [p for p in ports.values() if p]
        if len(nonzero) != len(set(nonzero)):
            raise InvalidConfig(f"endpoints share a port: {ports}")
        for iface in ep.interfaces:
            self.profile.require(iface)
        if ep.pubsub is not None:
            self.pubsub = configure_pubsub(ep.pubsub.config, self.profile)

        listeners = {}
        try:
            for name, port in ports.items():
                listeners[name] = self._track(_listen(ep.host, port))
                self.ports[name] = listeners[name].getsockname()[1]
        except PlcBenchError:
            self.stop()
            raise

        if "s7" in listeners:
            self._spawn(self._accept_loop, listeners["s7"], self._serve_s7, None, name="s7")
        if "opcua" in listeners:
            self._spawn(self._accept_loop, listeners["opcua"], self._serve_opcua, None, name="opcua")
        if "ouc_tcp" in listeners:
            self._spawn(self._accept_loop, listeners["ouc_tcp"], self._push_ouc_tcp, ep.ouc_tcp.peer_host,
                        name="ouc-tcp")
        if ep.ouc_udp is not None:
            self._spawn(self._push_ouc_udp, ep.ouc_udp, name="ouc-udp")
        if ep.opcua_write is not None:
            self._spawn(self._push_opcua_write, ep.opcua_write, name="opcua-write")
        if ep.pubsub is not None:
            for group in ep.pubsub.config.writer_groups:
                self._group_pacers[group.group_id] = Pacer(self._jitter, next(self._seeds))
                self._spawn(self._publish_group, group, ep.pubsub, name=f"uadp-{group.group_id}")

    # connection-oriented endpoints

    def _accept_loop(self, listener: socket.socket, handler, allowed_host: str | None) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            if allowed_host is not None and addr[0] != allowed_host:
                self.rejected_peers += 1
                conn.close()
                continue
            conn.settimeout(None)
            _nodelay(conn)
            self._spawn(self._connection, handler, self._track(conn), name=f"{handler.__name__}-{addr[1]}")

    def _connection(self, handler, conn: socket.socket) -> None:
        try:
            handler(conn)
        except (ConnectionFailed, Malformed, OSError) as exc:
            if not self._stop.is_set():
                log.debug("connection closed: %s", exc)
        finally:
            self._untrack(conn)

    def _serve_s7(self, conn: socket.socket) -> None:
        pdu_limit = self.profile.pdu_limit
        pacer = self.pacers[Interface.S7]
        while not self._stop.is_set():
            frame, _ = recv_framed(conn, s7.TPKT_HEADER, s7.tpkt_length)
            msg = s7.decode(frame)
            if isinstance(msg, s7.CotpConnect):
                if not msg.confirm:
                    conn.sendall(s7.encode(s7.CotpConnect(True, src_ref=1, dst_ref=msg.src_ref,
                                                          src_tsap=msg.dst_tsap, dst_tsap=msg.src_tsap,
                                                          tpdu_size=msg.tpdu_size)))
            elif isinstance(msg, s7.S7Setup):
                pdu_limit = min(msg.pdu_length, self.profile.pdu_limit)
                conn.sendall(s7.encode(s7.S7Setup(s7.S7Kind.ACK_DATA, msg.pdu_ref, pdu_limit,
                                                  msg.max_amq_calling, msg.max_amq_called)))
            elif msg.kind is s7.S7Kind.JOB:
                interval = s7_response_interval(self.profile, msg)
                for ack in handle_s7_read(msg, self.profile, self.store, pdu_limit):
                    with pacer.slot(interval):
                        conn.sendall(s7.encode(ack))

    def _read_values(self, nodes) -> list[opcua.DataValue]:
        indices = [opcua.node_index(n) for n in nodes]
        raws = self.store.read_many([(1, _variable_offset(i), VALUE_SIZE) if i else (1, -1, 0) for i in indices])
        stamp = opcua_now()
        return [opcua.DataValue(status=opcua.BAD_NODE_ID_UNKNOWN) if raw is None
                else opcua.DataValue(Scalar(DataType.INT32, DataType.INT32.unpack(raw)), source_timestamp=stamp)
                for raw in raws]

    def _write_values(self, nodes) -> tuple[int, ...]:
        codes, pending, writes = [], [], []
        for wv in nodes:
            index = opcua.node_index(wv.node_id)
            if wv.value.value is None:
                codes.append(opcua.BAD_TYPE_MISMATCH)
            elif not index:
                codes.append(opcua.BAD_NODE_ID_UNKNOWN)
            else:
                pending.append(len(codes))
                codes.append(opcua.GOOD)
                writes.append((1, _variable_offset(index), wv.value.value.dtype.pack(wv.value.value.value)))
        for pos, ok in zip(pending, self.store.write_many(writes)):
            if not ok:
                codes[pos] = opcua.BAD_NODE_ID_UNKNOWN
        return tuple(codes)

    def _serve_opcua(self, conn: socket.socket) -> None:
        pacer = self.pacers[Interface.OPCUA_READ]
        seq = itertools.count(1)
        while not self._stop.is_set():
            chunk, _ = recv_framed(conn, opcua.CHUNK_HEADER, opcua.chunk_length)
            req = opcua.decode(chunk)
            if not isinstance(req, (opcua.ReadRequest, opcua.WriteRequest)):
                raise Malformed(f"server does not accept {type(req).__name__}")
            ch = opcua.Channel(req.channel.channel_id, req.channel.token_id, next(seq), req.channel.request_id)
            header = opcua.ResponseHeader(opcua_now(), req.header.request_handle)
            if isinstance(req, opcua.ReadRequest):
                interval = self.profile.update_time(Interface.OPCUA_READ, max(1, len(req.node_ids))) / 1000
                with pacer.slot(interval):
                    results = tuple(self._read_values(req.node_ids))
                    conn.sendall(opcua.encode(opcua.ReadResponse(results, header, ch)))
            else:
                conn.sendall(opcua.encode(opcua.WriteResponse(self._write_values(req.nodes), header, ch)))

    def _push_ouc_tcp(self, conn: socket.socket) -> None:
        cfg = self.endpoints.ouc_tcp
        interval = self.profile.update_time(Interface.OUC_TCP, cfg.n) / 1000
        pacer = self.pacers[Interface.OUC_TCP]
        while not self._stop.is_set():
            with pacer.slot(interval):
                conn.sendall(self._ouc_payload(cfg.db, cfg.n, cfg.byte_order))

    # push endpoints

    def _ouc_payload(self, db: int, n: int, byte_order: str) -> bytes:
        raw = self.store.read(db, 0, n * VALUE_SIZE)
        if byte_order == "big":
            return raw
        return b"".join(raw[i:i + VALUE_SIZE][::-1] for i in range(0, len(raw), VALUE_SIZE))

    def _push_ouc_udp(self, cfg: OucUdpEndpoint) -> None:
        interval = self.profile.update_time(Interface.OUC_UDP, cfg.n) / 1000
        pacer = self.pacers[Interface.OUC_UDP]
        sock = self._track(socket.socket(socket.AF_INET, socket.SOCK_DGRAM))
        try:
            while not self._stop.is_set():
                with pacer.slot(interval):
                    try:
                        sock.sendto(self._ouc_payload(cfg.db, cfg.n, cfg.byte_order), cfg.peer)
                    except ConnectionRefusedError:
                        pass
        finally:
            self._untrack(sock)

    def _push_opcua_write(self, cfg: OpcUaWriteEndpoint) -> None:
        interval = self.profile.update_time(Interface.OPCUA_WRITE, cfg.n) / 1000
        pacer = self.pacers[Interface.OPCUA_WRITE]
        handles = itertools.count(1)
        while not self._stop.is_set():
            try:
                sock = socket.create_connection(cfg.target, timeout=1.0)
            except OSError:
                self._stop.wait(0.05)
                continue
            sock.settimeout(None)
            _nodelay(sock)
            self._track(sock)
            try:
                while not self._stop.is_set():
                    handle = next(handles)
                    raw = self.store.read(cfg.db, 0, cfg.n * VALUE_SIZE)
                    nodes = tuple(
                        opcua.WriteValue(opcua.write_node_id(i + 1),
                                         opcua.DataValue(Scalar(DataType.INT32, DataType.INT32.unpack(
                                             raw[i * VALUE_SIZE:(i + 1) * VALUE_SIZE]))))
                        for i in range(cfg.n))
                    req = opcua.WriteRequest(nodes, opcua.RequestHeader(timestamp=opcua_now(), request_handle=handle),
                                             opcua.Channel(sequence_number=handle, request_id=handle))
                    with pacer.slot(interval):
                        sock.sendall(opcua.encode(req))
                    chunk, _ = recv_framed(sock, opcua.CHUNK_HEADER, opcua.chunk_length)
                    opcua.decode(chunk)
            except (ConnectionFailed, Malformed, OSError):
                self._stop.wait(0.05)
            finally:
                self._untrack(sock)

    def _publish_group(self, group: WriterGroupConfig, ep: PubSubEndpoint) -> None:
        interval = group.publish_interval_ms / 1000
        pacer = self._group_pacers[group.group_id]
        sock = self._track(socket.socket(socket.AF_INET, socket.SOCK_DGRAM))
        if is_multicast(ep.destination[0]):
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, 1)
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_LOOP, 1)
        limits = self.profile.pubsub_limits
        try:
            while not self._stop.is_set():
                raws = self.store.read_many([(w.db, _variable_offset(w.first_index), w.fields * VALUE_SIZE)
                                             for w in group.writers])
                messages = tuple(
                    uadp.DataSetMessage(w.writer_id, tuple(
                        Scalar(DataType.INT32, DataType.INT32.unpack(raw[i:i + VALUE_SIZE]))
                        for i in range(0, len(raw), VALUE_SIZE)))
                    for w, raw in zip(group.writers, raws) if raw is not None)
                msg = uadp.UadpNetworkMessage(group.group_id, messages, ep.config.publisher_id)
                with pacer.slot(interval):
                    try:
                        sock.sendto(uadp.encode(msg, limits), ep.destination)
                    except ConnectionRefusedError:
                        pass
        finally:
            self._untrack(sock)


def serve(profile: PlcProfile, store: DataBlockStore | None = None, endpoints: Endpoints | None = None, *,
          jitter: float = 0.02, seed: int | None = None) -> Emulator:
    """Start every configured endpoint and return the running emulator."""
    emulator = Emulator(profile, store or DataBlockStore(), endpoints or Endpoints(), jitter, seed)
    emulator.start()
    return emulator
