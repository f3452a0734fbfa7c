"""Transports: in-process duplex queues, loopback TCP, fault injection.

The transport contract is a reliable, ordered, duplex byte channel with
blocking receive and timeout. Fault injection wraps a channel and
tampers with matching outgoing frames, for exercising the abort paths.
"""

from __future__ import annotations

import queue
import socket
from dataclasses import dataclass
from typing import Optional, Tuple

from .frames import HEADER, FrameType, MessageFrame, decode_header

DEFAULT_TIMEOUT = 120.0


class ChannelError(RuntimeError):
    """Transport failure: timeout, close, framing or ordering violation."""


class Channel:
    """Interface: send/recv of MessageFrame plus close()."""

    def send(self, frame: MessageFrame) -> None:
        raise NotImplementedError

    def recv(self, timeout: float = DEFAULT_TIMEOUT) -> MessageFrame:
        raise NotImplementedError

    def close(self) -> None:
        pass


class QueueChannel(Channel):
    def __init__(self, tx: queue.Queue, rx: queue.Queue):
        self._tx = tx
        self._rx = rx

    def send(self, frame: MessageFrame) -> None:
        self._tx.put(frame.encode())

    def recv(self, timeout: float = DEFAULT_TIMEOUT) -> MessageFrame:
        try:
            data = self._rx.get(timeout=timeout)
        except queue.Empty as exc:
            raise ChannelError("receive timeout") from exc
        if data is None:
            raise ChannelError("peer closed the channel")
        try:
            length, ftype = decode_header(data[:HEADER.size])
        except ValueError as exc:
            raise ChannelError(str(exc)) from exc
        payload = data[HEADER.size:]
        if len(payload) != length:
            raise ChannelError("framing error: truncated payload")
        return MessageFrame(ftype, payload)

    def close(self) -> None:
        self._tx.put(None)


class InProcessPair:
    """Two connected in-process channels (alice end, bob end)."""

    def __init__(self):
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        self.alice = QueueChannel(tx=a_to_b, rx=b_to_a)
        self.bob = QueueChannel(tx=b_to_a, rx=a_to_b)


class TcpChannel(Channel):
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send(self, frame: MessageFrame) -> None:
        try:
            self._sock.sendall(frame.encode())
        except OSError as exc:
            raise ChannelError(f"send failed: {exc}") from exc

    def _recv_exact(self, nbytes: int, timeout: float) -> bytes:
        self._sock.settimeout(timeout)
        chunks = []
        got = 0
        while got < nbytes:
            try:
                chunk = self._sock.recv(nbytes - got)
            except socket.timeout as exc:
                raise ChannelError("receive timeout") from exc
            except OSError as exc:
                raise ChannelError(f"receive failed: {exc}") from exc
            if not chunk:
                raise ChannelError("peer closed the connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self, timeout: float = DEFAULT_TIMEOUT) -> MessageFrame:
        header = self._recv_exact(HEADER.size, timeout)
        try:
            length, ftype = decode_header(header)
        except ValueError as exc:
            raise ChannelError(str(exc)) from exc
        payload = self._recv_exact(length, timeout) if length else b""
        return MessageFrame(ftype, payload)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def listen_tcp(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> Tuple[TcpChannel, int]:
    """Accept one connection; returns the channel and the bound port."""
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    bound_port = server.getsockname()[1]
    server.listen(1)
    server.settimeout(timeout)
    try:
        conn, _ = server.accept()
    except socket.timeout as exc:
        raise ChannelError("no peer connected before timeout") from exc
    finally:
        server.close()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return TcpChannel(conn), bound_port


def listen_tcp_pair(
    host: str, port: int, timeout: float = DEFAULT_TIMEOUT
) -> Tuple[TcpChannel, TcpChannel]:
    """Accept the protocol channel on `port` and the device channel on
    `port` + 1. Both sockets are bound before either accept, so the peer
    may connect to them in any order."""
    servers = []
    try:
        for p in (port, port + 1):
            server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            server.bind((host, p))
            server.listen(1)
            server.settimeout(timeout)
            servers.append(server)
        channels = []
        for server in servers:
            try:
                conn, _ = server.accept()
            except socket.timeout as exc:
                raise ChannelError("no peer connected before timeout") from exc
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            channels.append(TcpChannel(conn))
        return channels[0], channels[1]
    finally:
        for server in servers:
            server.close()


def connect_tcp(
    host: str, port: int, timeout: float = DEFAULT_TIMEOUT, retry_for: float = 10.0
) -> TcpChannel:
    """Connect, retrying briefly so either party may start first."""
    import time

    deadline = time.monotonic() + retry_for
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.1)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return TcpChannel(sock)


_FAULT_TYPE_ALIASES = {
    "syndrome": FrameType.SYNDROME,
    "bases-x": FrameType.BASES_X,
    "round-t": FrameType.ROUND_T,
    "hash-ec": FrameType.HASH_EC,
    "tag-b": FrameType.TAG_B,
    "confirm-c": FrameType.CONFIRM_C,
    "tag-a": FrameType.TAG_A,
    "flag-f": FrameType.FLAG_F,
    "tag-f": FrameType.TAG_F,
}


@dataclass(frozen=True)
class FaultSpec:
    """Classical tampering applied to one matching outgoing frame.

    Specs: `flip-syndrome-bit:IDX` flips one syndrome bit;
    `tamper:TYPE:BITIDX` flips one payload bit of the first frame of
    that type; `drop:TYPE` swallows the frame entirely.
    """

    frame_type: FrameType
    action: str  # "flip" or "drop"
    bit_index: int = 0

    @classmethod
    def parse(cls, spec: str) -> "FaultSpec":
        parts = spec.split(":")
        if parts[0] == "flip-syndrome-bit" and len(parts) == 2:
            return cls(FrameType.SYNDROME, "flip", int(parts[1]))
        if parts[0] == "tamper" and len(parts) == 3:
            ftype = _FAULT_TYPE_ALIASES.get(parts[1])
            if ftype is None:
                raise ValueError(f"unknown frame type {parts[1]!r}")
            return cls(ftype, "flip", int(parts[2]))
        if parts[0] == "drop" and len(parts) == 2:
            ftype = _FAULT_TYPE_ALIASES.get(parts[1])
            if ftype is None:
                raise ValueError(f"unknown frame type {parts[1]!r}")
            return cls(ftype, "drop")
        raise ValueError(f"unrecognized fault spec {spec!r}")


class FaultyChannel(Channel):
    """Wraps a channel and applies a fault to the first matching send."""

    def __init__(self, inner: Channel, fault: FaultSpec):
        self._inner = inner
        self._fault = fault
        self._armed = True

    def send(self, frame: MessageFrame) -> None:
        if self._armed and frame.msg_type == self._fault.frame_type:
            self._armed = False
            if self._fault.action == "drop":
                return
            idx = self._fault.bit_index
            if idx >= 8 * len(frame.payload):
                raise ValueError(
                    f"fault bit {idx} beyond payload of {len(frame.payload)} bytes"
                )
            tampered = bytearray(frame.payload)
            tampered[idx // 8] ^= 1 << (idx % 8)
            frame = MessageFrame(frame.msg_type, bytes(tampered))
        self._inner.send(frame)

    def recv(self, timeout: float = DEFAULT_TIMEOUT) -> MessageFrame:
        return self._inner.recv(timeout)

    def close(self) -> None:
        self._inner.close()
