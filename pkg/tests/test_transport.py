import socket
import threading

import numpy as np
import pytest

from bqkd.errors import FramingError, TransportFailure
from bqkd.qudit import StateVector, apply_entangler, copy_unitary
from bqkd.transport import (
    InProcessChannel,
    Kind,
    SocketChannel,
    WireMessage,
    accept,
    connect,
    decode,
    encode,
    listen,
    parse_endpoint,
)


def roundtrip(s):
    return decode(encode(WireMessage(Kind.QSTATE, 5, s))).payload


def test_ket_roundtrip_is_exact():
    s = StateVector.ket(4, 0)
    line = encode(WireMessage(Kind.QSTATE, 0, s))
    assert b'"amps":[[1,0],[0,0],[0,0],[0,0]]' in line
    assert roundtrip(s) == s


def test_superposition_roundtrip():
    s = StateVector(4, np.array([1, 1j, 0, 0]) / np.sqrt(2))
    assert np.abs(roundtrip(s).amps - s.amps).max() <= 1e-15


def test_random_states_roundtrip_losslessly():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        d = 2 * int(rng.integers(2, 9))
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        s = StateVector(d, v / np.linalg.norm(v))
        worst = max(worst, float(np.abs(roundtrip(s).amps - s.amps).max()))
    assert worst <= 1e-15


def test_joint_state_carries_environment():
    s = apply_entangler(StateVector.ket(4, 1), copy_unitary(4), 4)
    back = roundtrip(s)
    assert back.env == 4 and back == s


def test_frame_layout():
    line = encode(WireMessage(Kind.CHECK_SET_REQUEST, -1, {"rounds": [1, 2]}))
    assert line.endswith(b"\n") and line.count(b"\n") == 1
    msg = decode(line)
    assert msg.kind is Kind.CHECK_SET_REQUEST and msg.payload == {"rounds": [1, 2]}


@pytest.mark.parametrize("bad", [b"not json\n", b'{"kind":"Nope","round":0,"payload":null}\n',
                                 b'{"kind":"QState","round":0,"payload":{"dim":4}}\n'])
def test_malformed_frames(bad):
    with pytest.raises(FramingError):
        decode(bad)


def test_inprocess_channel_fifo_and_trace():
    trace = []
    ch = InProcessChannel(serialize=True, trace=trace)
    for r in range(3):
        ch.send(WireMessage(Kind.DONE, r, None))
    assert [ch.recv().round for _ in range(3)] == [0, 1, 2]
    assert len(trace) == 3
    with pytest.raises(TransportFailure):
        ch.recv()
    ch.close()
    with pytest.raises(TransportFailure):
        ch.send(WireMessage(Kind.DONE, 0, None))


def _pair():
    srv = listen("127.0.0.1:0")
    ep = "%s:%d" % srv.getsockname()[:2]
    box = {}
    t = threading.Thread(target=lambda: box.setdefault("ch", accept(srv)))
    t.start()
    client = connect(ep)
    t.join()
    srv.close()
    return client, box["ch"]


def test_socket_roundtrip_and_close():
    a, b = _pair()
    s = StateVector(4, np.array([0, 1, 1, 0]) / np.sqrt(2))
    a.send(WireMessage(Kind.QSTATE, 3, s))
    a.send(WireMessage(Kind.DONE, -1, {"qber": {}}))
    got = b.recv()
    assert got.round == 3 and got.payload == s
    assert b.recv().kind is Kind.DONE
    a.close()
    with pytest.raises(TransportFailure):
        b.recv()
    b.close()


def test_truncated_socket_frame():
    a, b = _pair()
    a.sock.sendall(b'{"kind":"Done","round":0')
    a.close()
    with pytest.raises(FramingError):
        b.recv()
    b.close()


def test_connect_refused():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(TransportFailure):
        connect(f"127.0.0.1:{port}", timeout=2)


def test_parse_endpoint():
    assert parse_endpoint("localhost:80") == ("localhost", 80)
    with pytest.raises(ValueError):
        parse_endpoint("nope")
    assert isinstance(SocketChannel, type)
