"""
Binary event messages and a small event server.

Message layout (33 bytes, little-endian):
    magic "ET" | version u8 | kind u8 | finger u8 | timestamp_us u64 | R, theta, force, pitch, yaw f32
Stream transport prefixes every message with its length as u16; datagram
transport sends one message per datagram.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
from collections import deque
from typing import Iterable, Iterator, List, Optional, Tuple

from .errors import BindError, ConnectionClosed, DecodeError
from .events import EventKind, TouchEvent
from .keypoints import Finger, PolarContext

MAGIC = b"ET"
VERSION = 1
_LAYOUT = struct.Struct("<2sBBBQfffff")
MESSAGE_SIZE = _LAYOUT.size
_PREFIX = struct.Struct("<H")
assert MESSAGE_SIZE == 33


def encode_event(e: TouchEvent) -> bytes:
    if not 0 <= int(e.kind) <= 6 or not 0 <= int(e.finger) <= 4:
        raise ValueError(f"kind {int(e.kind)} / finger {int(e.finger)} out of range")
    values = (e.polar.R, e.polar.theta, e.force, e.pitch, e.yaw)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("event values must be finite")
    return _LAYOUT.pack(MAGIC, VERSION, int(e.kind), int(e.finger), int(e.timestamp_us),
                        *values)


def decode_event(data: bytes) -> TouchEvent:
    """Inverse of encode_event. The frame index is not carried on the wire and decodes as None."""
    if len(data) != MESSAGE_SIZE:
        raise DecodeError(f"event message must be {MESSAGE_SIZE} bytes, got {len(data)}")
    magic, version, kind, finger, ts, r, theta, force, pitch, yaw = _LAYOUT.unpack(data)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}")
    if kind > 6:
        raise DecodeError(f"unknown event kind {kind}")
    if finger > 4:
        raise DecodeError(f"unknown finger {finger}")
    if not all(math.isfinite(v) for v in (r, theta, force, pitch, yaw)):
        raise DecodeError("non-finite value in event message")
    return TouchEvent(EventKind(kind), Finger(finger), None, ts, PolarContext(r, theta), force, pitch, yaw)


def frame_message(payload: bytes) -> bytes:
    return _PREFIX.pack(len(payload)) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionClosed(f"peer closed with {len(buf)}/{n} bytes of a message read")
        buf += chunk
    return bytes(buf)


def recv_event(sock: socket.socket) -> TouchEvent:
    (n,) = _PREFIX.unpack(_recv_exact(sock, _PREFIX.size))
    return decode_event(_recv_exact(sock, n))


def iter_stream_events(sock: socket.socket) -> Iterator[TouchEvent]:
    """Events from a stream connection until the server closes it cleanly."""
    while True:
        try:
            head = sock.recv(_PREFIX.size)
        except OSError:
            return
        if not head:
            return
        if len(head) < _PREFIX.size:
            head += _recv_exact(sock, _PREFIX.size - len(head))
        (n,) = _PREFIX.unpack(head)
        yield decode_event(_recv_exact(sock, n))


class EventQueue:
    """Per-session bounded queue. When full, Move events are dropped; every other kind is kept."""

    def __init__(self, capacity: int = 256):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.dropped = 0
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False

    def __len__(self):
        return len(self._items)

    def offer(self, kind: EventKind, message: bytes) -> bool:
        with self._cond:
            if self._closed:
                return False
            if len(self._items) >= self.capacity and kind == EventKind.MOVE:
                self.dropped += 1
                return False
            self._items.append(message)
            self._cond.notify()
            return True

    def drain(self, timeout: Optional[float] = None) -> List[bytes]:
        """Everything queued, blocking until at least one item or close. Empty list means closed."""
        with self._cond:
            while not self._items and not self._closed:
                if not self._cond.wait(timeout):
                    return []
            out = list(self._items)
            self._items.clear()
            return out

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed


class _Session:
    def __init__(self, conn: socket.socket, capacity: int):
        self.conn = conn
        self.queue = EventQueue(capacity)
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.sent = 0

    def _run(self):
        try:
            while True:
                batch = self.queue.drain()
                if not batch:
                    break
                self.conn.sendall(b"".join(batch))
                self.sent += len(batch)
        except OSError:
            pass
        finally:
            self.queue.close()
            try:
                self.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.conn.close()


class EventServer:
    """Fans events out to subscribers.

    mode="stream": TCP listener; each accepted connection is a session with its
    own queue and sender thread, so one slow consumer never blocks the producer.
    mode="datagram": UDP; peers subscribe by sending any datagram to the server,
    and events are sent fire-and-forget (no subscriber is not an error).
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, mode: str = "stream", queue_capacity: int = 256):
        if mode not in ("stream", "datagram"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.queue_capacity = queue_capacity
        self._sessions: List[_Session] = []
        self._peers: List[Tuple[str, int]] = []
        self._lock = threading.Lock()
        self._running = True
        kind = socket.SOCK_STREAM if mode == "stream" else socket.SOCK_DGRAM
        self._sock = socket.socket(socket.AF_INET, kind)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
        except OSError as exc:
            self._sock.close()
            raise BindError(exc.errno, f"cannot bind {host}:{port}: {exc.strerror}") from exc
        if mode == "stream":
            self._sock.listen(16)
        self._thread = threading.Thread(target=self._accept_loop if mode == "stream" else self._subscribe_loop,
                                        daemon=True)
        self._thread.start()

    @property
    def address(self) -> Tuple[str, int]:
        return self._sock.getsockname()

    @property
    def dropped(self) -> int:
        with self._lock:
            return sum(s.queue.dropped for s in self._sessions)

    @property
    def session_count(self) -> int:
        with self._lock:
            return len([s for s in self._sessions if not s.queue.closed])

    def _accept_loop(self):
        while self._running:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            session = _Session(conn, self.queue_capacity)
            with self._lock:
                self._sessions.append(session)
            session.thread.start()

    def _subscribe_loop(self):
        while self._running:
            try:
                _, addr = self._sock.recvfrom(64)
            except OSError:
                return
            with self._lock:
                if addr not in self._peers:
                    self._peers.append(addr)

    def publish(self, e: TouchEvent) -> None:
        msg = encode_event(e)
        if self.mode == "datagram":
            with self._lock:
                peers = list(self._peers)
            for addr in peers:
                try:
                    self._sock.sendto(msg, addr)
                except OSError:
                    pass
            return
        framed = frame_message(msg)
        with self._lock:
            sessions = [s for s in self._sessions if not s.queue.closed]
        for s in sessions:
            s.queue.offer(e.kind, framed)

    def publish_all(self, events: Iterable[TouchEvent]) -> int:
        n = 0
        for e in events:
            self.publish(e)
            n += 1
        return n

    def wait_for_subscribers(self, n: int = 1, timeout: float = 5.0) -> bool:
        import time

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                count = len(self._sessions) if self.mode == "stream" else len(self._peers)
            if count >= n:
                return True
            time.sleep(0.005)
        return False

    def close(self, flush_timeout: float = 5.0) -> None:
        """Stop accepting, let each session flush what it has queued, then close."""
        self._running = False
        with self._lock:
            sessions = list(self._sessions)
        for s in sessions:
            s.queue.close()
        for s in sessions:
            s.thread.join(flush_timeout)
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self._thread.join(1.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_events(events: Iterable[TouchEvent], host: str = "127.0.0.1", port: int = 0, mode: str = "stream",
                 wait_subscribers: int = 0, timeout: float = 5.0) -> int:
    """Publish a finite event stream and shut down. Returns the number of events published."""
    with EventServer(host, port, mode) as server:
        if wait_subscribers:
            server.wait_for_subscribers(wait_subscribers, timeout)
        return server.publish_all(events)
