"""Socket helpers: exact reads, message framing and kernel receive timestamps."""
from __future__ import annotations

import socket
import struct
import time
from typing import Callable

from .errors import ConnectionFailed, MeasurementTimeout

SO_TIMESTAMPNS = getattr(socket, "SO_TIMESTAMPNS", 35 if hasattr(socket, "AF_PACKET") else None)
_CMSG_SPACE = 64


def enable_rx_timestamps(sock: socket.socket) -> bool:
    """Ask the kernel to stamp received data; False where unsupported."""
    if SO_TIMESTAMPNS is None:
        return False
    try:
        sock.setsockopt(socket.SOL_SOCKET, SO_TIMESTAMPNS, 1)
    except OSError:
        return False
    return True


def _stamp(ancdata) -> float | None:
    for level, kind, data in ancdata:
        if level == socket.SOL_SOCKET and kind == SO_TIMESTAMPNS and len(data) >= 16:
            sec, nsec = struct.unpack("qq", data[:16])
            return sec + nsec * 1e-9
    return None


def _recv(sock: socket.socket, size: int) -> tuple[bytes, float]:
    try:
        data, anc, _flags, _addr = sock.recvmsg(size, _CMSG_SPACE)
    except socket.timeout:
        raise MeasurementTimeout("no data before timeout") from None
    except ConnectionError as exc:
        raise ConnectionFailed(str(exc)) from exc
    stamp = _stamp(anc)
    return data, time.time() if stamp is None else stamp


def recv_exact(sock: socket.socket, size: int) -> tuple[bytes, float]:
    """Read exactly ``size`` bytes; the timestamp is that of the last chunk."""
    chunks, got, stamp = [], 0, time.time()
    while got < size:
        data, stamp = _recv(sock, size - got)
        if not data:
            raise ConnectionFailed("peer closed the connection")
        chunks.append(data)
        got += len(data)
    return b"".join(chunks), stamp


def recv_framed(sock: socket.socket, header_size: int, total_length: Callable[[bytes], int]) -> tuple[bytes, float]:
    """Read one length-prefixed message (TPKT, UATCP chunk, ...)."""
    header, stamp = recv_exact(sock, header_size)
    rest = total_length(header) - header_size
    if rest <= 0:
        return header, stamp
    body, stamp = recv_exact(sock, rest)
    return header + body, stamp


def recv_datagram(sock: socket.socket, bufsize: int = 65535) -> tuple[bytes, tuple, float]:
    try:
        data, anc, _flags, addr = sock.recvmsg(bufsize, _CMSG_SPACE)
    except socket.timeout:
        raise MeasurementTimeout("no datagram before timeout") from None
    stamp = _stamp(anc)
    return data, addr, time.time() if stamp is None else stamp


def parse_hostport(text: str | tuple | list, default_port: int | None = None) -> tuple[str, int]:
    if isinstance(text, (tuple, list)):
        host, port = text
        return str(host), int(port)
    host, sep, port = str(text).rpartition(":")
    if not sep:
        if default_port is None:
            raise ValueError(f"missing port in {text!r}")
        return str(text), default_port
    return host, int(port)


def is_multicast(host: str) -> bool:
    try:
        first = int(host.split(".")[0])
    except ValueError:
        return False
    return 224 <= first <= 239
