"""Channels carrying quantum-state frames and classical announcements.

On a socket every message is one newline-delimited JSON object::

    {"kind": "QState", "round": 17, "payload": {"dim": 4, "amps": [[re, im], ...]}}

Amplitudes are written with 17 significant digits, which reproduces every
double exactly. A state still entangled with an eavesdropper's ancilla
carries an extra ``"env"`` field (amplitudes are then travel-major over
``dim * env`` entries); the receiving party only ever measures the travel
factor.
"""

from __future__ import annotations

import enum
import json
import socket
from collections import deque
from typing import Any, NamedTuple

import numpy as np

from .errors import FramingError, TransportFailure
from .qudit import StateVector


class Kind(str, enum.Enum):
    HELLO = "Hello"
    QSTATE = "QState"
    BASIS_REVEAL = "BasisReveal"
    MEASURED_ROUNDS_REVEAL = "MeasuredRoundsReveal"
    DISCARD_SET = "DiscardSet"
    CHECK_SET_REQUEST = "CheckSetRequest"
    CHECK_DATA = "CheckData"
    ABORT = "Abort"
    DONE = "Done"
    TRANSCRIPT = "Transcript"


class WireMessage(NamedTuple):
    kind: Kind
    round: int
    payload: Any = None


def _fmt(x: float) -> str:
    return "%.17g" % x


def state_payload_json(s: StateVector) -> str:
    amps = ",".join(f"[{_fmt(z.real)},{_fmt(z.imag)}]" for z in s.amps.tolist())
    env = f',"env":{s.env}' if s.env != 1 else ""
    return f'{{"dim":{s.dim}{env},"amps":[{amps}]}}'


def state_from_payload(p: dict) -> StateVector:
    try:
        dim, env = int(p["dim"]), int(p.get("env", 1))
        arr = np.array(p["amps"], dtype=float)
        amps = arr[:, 0] + 1j * arr[:, 1]
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FramingError(f"bad QState payload: {exc}") from exc
    return StateVector(dim, amps, env)


def encode(msg: WireMessage) -> bytes:
    head = '{"kind":%s,"round":%d,"payload":' % (json.dumps(msg.kind.value), msg.round)
    if msg.kind is Kind.QSTATE:
        body = state_payload_json(msg.payload)
    else:
        body = json.dumps(msg.payload, separators=(",", ":"), sort_keys=True)
    return (head + body + "}\n").encode("utf-8")


def decode(line: bytes | str) -> WireMessage:
    try:
        obj = json.loads(line)
        kind = Kind(obj["kind"])
        round_ = int(obj["round"])
        payload = obj["payload"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FramingError(f"malformed frame {line[:80]!r}: {exc}") from exc
    if kind is Kind.QSTATE:
        payload = state_from_payload(payload)
    return WireMessage(kind, round_, payload)


class InProcessChannel:
    """FIFO delivering messages inside one process.

    With ``serialize=True`` every message goes through the wire codec, which
    exercises exactly the bytes a socket would carry. ``trace`` collects the
    encoded frames when given a list.
    """

    def __init__(self, serialize: bool = False, trace: list | None = None):
        self.serialize = serialize
        self.trace = trace
        self._queue: deque = deque()
        self.closed = False

    def send(self, msg: WireMessage) -> None:
        if self.closed:
            raise TransportFailure("channel closed")
        if self.serialize or self.trace is not None:
            frame = encode(msg)
            if self.trace is not None:
                self.trace.append(frame)
            if self.serialize:
                msg = decode(frame)
        self._queue.append(msg)

    def recv(self) -> WireMessage:
        if not self._queue:
            raise TransportFailure("no message pending" if not self.closed else "channel closed")
        return self._queue.popleft()

    def pending(self) -> int:
        return len(self._queue)

    def close(self) -> None:
        self.closed = True


class SocketChannel:
    """Newline-delimited JSON frames over a connected TCP socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = bytearray()
        self._eof = False

    def fileno(self) -> int:
        return self.sock.fileno()

    def has_buffered_frame(self) -> bool:
        return b"\n" in self._buf

    def send(self, msg: WireMessage) -> None:
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise TransportFailure(f"send failed: {exc}") from exc

    def recv(self) -> WireMessage:
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[: nl + 1])
                del self._buf[: nl + 1]
                return decode(line)
            if self._eof:
                if self._buf:
                    raise FramingError("truncated frame before end of stream")
                raise TransportFailure("connection closed by peer")
            try:
                chunk = self.sock.recv(1 << 16)
            except OSError as exc:
                raise TransportFailure(f"recv failed: {exc}") from exc
            if not chunk:
                self._eof = True
            self._buf += chunk

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {text!r}")
    return host, int(port)


def listen(endpoint: str) -> socket.socket:
    host, port = parse_endpoint(endpoint)
    srv = socket.create_server((host, port))
    return srv


def accept(server: socket.socket, timeout: float | None = 60.0) -> SocketChannel:
    server.settimeout(timeout)
    try:
        conn, _ = server.accept()
    except OSError as exc:
        raise TransportFailure(f"accept failed: {exc}") from exc
    conn.settimeout(None)
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketChannel(conn)


def connect(endpoint: str, timeout: float = 30.0) -> SocketChannel:
    host, port = parse_endpoint(endpoint)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportFailure(f"cannot connect to {endpoint}: {exc}") from exc
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketChannel(sock)
