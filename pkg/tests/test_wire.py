import math
import socket
import struct
import threading
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skintouch.errors import BindError, ConnectionClosed, DecodeError
from skintouch.events import EventKind, TouchEvent
from skintouch.keypoints import Finger, PolarContext
from skintouch.wire import (
    MESSAGE_SIZE, EventQueue, EventServer, decode_event, encode_event, frame_message, iter_stream_events,
    recv_event, serve_events,
)


def f32(x):
    return float(np.float32(x))


def event(kind=EventKind.DOWN, finger=Finger.INDEX, ts=1_000_000, r=1.0, theta=0.0, force=0.5, pitch=0.0, yaw=0.0):
    return TouchEvent(kind, finger, None, ts, PolarContext(r, theta), force, pitch, yaw)


def test_header_layout():
    b = encode_event(event())
    assert len(b) == MESSAGE_SIZE == 33
    assert b[:5] == bytes([0x45, 0x54, 0x01, 0x00, 0x01])
    assert struct.unpack_from("<Q", b, 5)[0] == 1_000_000
    assert struct.unpack_from("<5f", b, 13) == (1.0, 0.0, 0.5, 0.0, 0.0)


def test_decode_errors():
    b = encode_event(event())
    with pytest.raises(DecodeError):
        decode_event(b[:32])
    with pytest.raises(DecodeError):
        decode_event(b"XX" + b[2:])
    with pytest.raises(DecodeError):
        decode_event(b[:2] + b"\x02" + b[3:])
    with pytest.raises(DecodeError):
        decode_event(b[:3] + b"\x07" + b[4:])
    with pytest.raises(DecodeError):
        decode_event(b[:4] + b"\x05" + b[5:])


def test_frame_index_not_on_wire():
    e = TouchEvent(EventKind.UP, Finger.RING, 17, 5, PolarContext(0.5, 0.25), 0.0, 0.0, 0.0)
    assert decode_event(encode_event(e)).frame_index is None


f32s = st.floats(width=32, allow_nan=False, allow_infinity=False)


@given(st.sampled_from(list(EventKind)), st.sampled_from(list(Finger)), st.integers(0, 2**64 - 1),
       f32s, f32s, f32s, f32s, f32s)
def test_event_round_trip(kind, finger, ts, r, theta, force, pitch, yaw):
    e = event(kind, finger, ts, r, theta, force, pitch, yaw)
    assert decode_event(encode_event(e)) == e


@given(st.integers(0, 6), st.integers(0, 4), st.binary(min_size=28, max_size=28))
def test_bytes_round_trip(kind, finger, payload):
    b = b"ET\x01" + bytes([kind, finger]) + payload
    if all(math.isfinite(v) for v in struct.unpack_from("<5f", b, 13)):
        assert encode_event(decode_event(b)) == b
    else:
        with pytest.raises(DecodeError):
            decode_event(b)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_values_rejected(bad):
    with pytest.raises(ValueError):
        encode_event(event(force=bad))
    b = bytearray(encode_event(event()))
    struct.pack_into("<f", b, 21, bad)
    with pytest.raises(DecodeError):
        decode_event(bytes(b))


def test_encode_rejects_out_of_range():
    bad = TouchEvent(7, Finger.INDEX, None, 0, PolarContext(0, 0), 0, 0, 0)
    with pytest.raises(ValueError):
        encode_event(bad)


# ---- queue policy ----------------------------------------------------------------

def test_queue_drops_only_moves():
    q = EventQueue(capacity=3)
    for _ in range(3):
        assert q.offer(EventKind.MOVE, b"m")
    assert not q.offer(EventKind.MOVE, b"m")
    assert q.offer(EventKind.UP, b"u") and q.offer(EventKind.DOWN, b"d")
    assert q.dropped == 1
    assert q.drain(0.1) == [b"m", b"m", b"m", b"u", b"d"]
    q.close()
    assert q.drain(0.1) == [] and not q.offer(EventKind.DOWN, b"d")


def test_queue_validation():
    with pytest.raises(ValueError):
        EventQueue(0)


# ---- stream transport ---------------------------------------------------------------

def connect(server):
    s = socket.create_connection(server.address, timeout=10)
    assert server.wait_for_subscribers(1, 5.0)
    return s


def sample_events(n, seed=0):
    rng = np.random.default_rng(seed)
    kinds = list(EventKind)
    return [event(kinds[int(rng.integers(7))], Finger(int(rng.integers(5))), i * 1000,
                  f32(rng.uniform(0, 2)), f32(rng.uniform(-3, 3)), f32(rng.uniform(0, 3.5)),
                  f32(rng.uniform(-1, 1)), f32(rng.uniform(-3, 3))) for i in range(n)]


def test_loopback_1000_events_in_order():
    events = sample_events(1000)
    with EventServer(mode="stream", queue_capacity=2000) as server:
        client = connect(server)
        server.publish_all(events)
    got = list(iter_stream_events(client))
    client.close()
    assert got == events


def test_per_finger_order_with_two_subscribers():
    events = sample_events(300, seed=1)
    with EventServer(mode="stream", queue_capacity=1000) as server:
        a = socket.create_connection(server.address, timeout=10)
        b = socket.create_connection(server.address, timeout=10)
        assert server.wait_for_subscribers(2, 5.0)
        server.publish_all(events)
    for c in (a, b):
        got = list(iter_stream_events(c))
        c.close()
        for finger in Finger:
            assert [e for e in got if e.finger == finger] == [e for e in events if e.finger == finger]


def test_stalled_consumer_drops_moves_not_presses():
    n_presses, moves_per_press = 40, 500
    stream = []
    for p in range(n_presses):
        stream.append(event(EventKind.DOWN, ts=len(stream)))
        stream += [event(EventKind.MOVE, ts=len(stream) + i) for i in range(moves_per_press)]
        stream.append(event(EventKind.UP, ts=len(stream)))
    with EventServer(mode="stream", queue_capacity=64) as server:
        client = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        client.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 2048)
        client.connect(server.address)
        assert server.wait_for_subscribers(1, 5.0)
        server.publish_all(stream)  # nobody reads yet: the session's queue fills up
        dropped = server.dropped
        client.settimeout(10)
    got = list(iter_stream_events(client))
    client.close()
    assert dropped > 0
    presses = [e.kind for e in got if e.kind != EventKind.MOVE]
    assert presses == [EventKind.DOWN, EventKind.UP] * n_presses
    assert sum(e.kind == EventKind.MOVE for e in got) == n_presses * moves_per_press - dropped
    ts = [e.timestamp_us for e in got]
    assert ts == sorted(ts)


def test_recv_event_and_closed_connection():
    a, b = socket.socketpair()
    msg = encode_event(event())
    a.sendall(frame_message(msg) + frame_message(msg)[:10])
    a.close()
    assert recv_event(b) == event()
    with pytest.raises(ConnectionClosed):
        recv_event(b)
    b.close()


# ---- datagram transport ---------------------------------------------------------------

def test_datagram_without_subscriber_is_fine():
    assert serve_events(sample_events(20), mode="datagram") == 20


def test_datagram_delivery():
    events = sample_events(50, seed=3)
    with EventServer(mode="datagram") as server:
        client = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        client.settimeout(5)
        client.sendto(b"hi", server.address)
        assert server.wait_for_subscribers(1, 5.0)
        server.publish_all(events)
        got = [decode_event(client.recvfrom(64)[0]) for _ in events]
        client.close()
    assert got == events  # loopback datagrams arrive intact and in order


def test_bind_error():
    with EventServer(mode="stream") as server:
        host, port = server.address
        with pytest.raises(BindError):
            EventServer(host, port, mode="stream")
    with pytest.raises(ValueError):
        EventServer(mode="carrier-pigeon")
