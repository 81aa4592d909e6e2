"""Framed TCP transport: the real-network counterpart of the simulator.

Each node listens on one port and keeps one outbound channel per peer. Records
travel length-prefixed (4-byte big-endian length, then an 8-byte channel
sequence, then the canonical frame bytes); a frame above the size cap is
rejected with a diagnostic on either side. The receiver acknowledges consumed
sequences on the reverse path of the same connection, and the writer retires a
frame only once acknowledged, so frames in flight or queued while a peer is
down are resent after reconnect and nothing is lost. Duplicates created by a
resend race are shed by the receiver's sequence cursor.

The reactor contract matches the simulator: one sequential loop per node
receives messages and timers through a context carrying integer ticks
(``tick_ms`` real milliseconds per tick, 100 by default so the default leader
timeout of 20 ticks equals 2 seconds).
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

from .wire import Frame, decode_frame, encode_frame

log = logging.getLogger(__name__)

DEFAULT_MAX_FRAME = 1 << 20  # 1 MiB
DEFAULT_QUEUE_SIZE = 1024
DEFAULT_TICK_MS = 100
_LEN = struct.Struct(">I")
_SEQ = struct.Struct(">Q")


class FrameTooLarge(Exception):
    """Frame exceeds the configured size cap."""


class _Closing(Exception):
    """Internal: channel shut down locally."""


def read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return buf


def write_frame(sock: socket.socket, payload: bytes, max_frame: int) -> None:
    if len(payload) > max_frame:
        raise FrameTooLarge(f"frame of {len(payload)} bytes exceeds cap {max_frame}")
    sock.sendall(_LEN.pack(len(payload)) + payload)


def read_frame(sock: socket.socket, max_frame: int) -> bytes:
    (length,) = _LEN.unpack(read_exact(sock, _LEN.size))
    if length > max_frame:
        raise FrameTooLarge(f"incoming frame of {length} bytes exceeds cap {max_frame}")
    return read_exact(sock, length)


# ---------------------------------------------------------------------------
# host configuration lines: "<replicaIndex> <host-or-service-name> <port>"
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HostLine:
    index: int
    name: str
    port: int

    def format(self) -> str:
        return f"{self.index} {self.name} {self.port}"


def parse_host_config(text: str) -> list[HostLine]:
    lines = []
    for raw in text.splitlines():
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        parts = raw.split()
        if len(parts) != 3:
            raise ValueError(f"bad host config line {raw!r}")
        lines.append(HostLine(index=int(parts[0]), name=parts[1], port=int(parts[2])))
    return lines


def format_host_config(lines: list[HostLine]) -> str:
    return "".join(line.format() + "\n" for line in sorted(lines, key=lambda l: l.index))


# ---------------------------------------------------------------------------
# per-peer outbound channel
# ---------------------------------------------------------------------------


class _Outbox:
    """Writer thread with reconnect; a frame is retired only once acked."""

    def __init__(self, owner: str, peer: str, addr: tuple[str, int],
                 max_frame: int, metrics: dict) -> None:
        self.owner = owner
        self.peer = peer
        self.addr = addr
        self.max_frame = max_frame
        self.metrics = metrics
        self.to_send: deque[tuple[int, bytes]] = deque()
        self.unacked: deque[tuple[int, bytes]] = deque()
        self.next_seq = 0
        self.lock = threading.Condition()
        self.closing = False
        self.thread = threading.Thread(
            target=self._run, name=f"out:{owner}->{peer}", daemon=True
        )

    def start(self) -> None:
        self.thread.start()

    def put(self, payload: bytes) -> None:
        if len(payload) > self.max_frame:
            self.metrics["oversized_rejected"] += 1
            log.error("%s -> %s: rejecting oversized frame (%d bytes)",
                      self.owner, self.peer, len(payload))
            return
        with self.lock:
            self.to_send.append((self.next_seq, payload))
            self.next_seq += 1
            self.lock.notify()

    def close(self) -> None:
        with self.lock:
            self.closing = True
            self.lock.notify()

    def _connect(self) -> socket.socket:
        backoff = 0.02
        while True:
            with self.lock:
                if self.closing:
                    raise _Closing
            try:
                sock = socket.create_connection(self.addr, timeout=1.0)
                if sock.getsockname() == sock.getpeername():
                    # loopback self-connect while the peer is down: the dialer
                    # landed on the peer's own port and would squat on it
                    sock.close()
                    raise OSError("self-connect")
                sock.settimeout(None)
                write_frame(sock, self.owner.encode("utf-8"), self.max_frame)
            except OSError:
                time.sleep(backoff)
                backoff = min(backoff * 2, 0.5)
                continue
            with self.lock:
                # everything sent on the previous connection but not yet acked
                # goes to the front of the queue, in order
                self.to_send.extendleft(reversed(self.unacked))
                self.unacked.clear()
            threading.Thread(target=self._ack_loop, args=(sock,),
                             name=f"ack:{self.owner}->{self.peer}", daemon=True).start()
            self.metrics["connects"] += 1
            return sock

    def _ack_loop(self, sock: socket.socket) -> None:
        try:
            while True:
                (ack,) = _SEQ.unpack(read_exact(sock, _SEQ.size))
                with self.lock:
                    while self.unacked and self.unacked[0][0] < ack:
                        self.unacked.popleft()
                    while self.to_send and self.to_send[0][0] < ack:
                        self.to_send.popleft()
        except (ConnectionError, OSError):
            return

    def _run(self) -> None:
        sock = None
        while True:
            try:
                if sock is None:
                    sock = self._connect()
            except _Closing:
                break
            with self.lock:
                while not self.to_send and not self.closing:
                    self.lock.wait(0.5)
                if self.closing:
                    break
                seq, payload = self.to_send[0]
            try:
                sock.sendall(_LEN.pack(len(payload) + _SEQ.size)
                             + _SEQ.pack(seq) + payload)
            except OSError:
                sock.close()
                sock = None
                self.metrics["reconnects"] += 1
                continue
            with self.lock:
                if self.to_send and self.to_send[0][0] == seq:
                    self.to_send.popleft()
                    self.unacked.append((seq, payload))
            self.metrics["frames_out"] += 1
        if sock is not None:
            sock.close()


# ---------------------------------------------------------------------------
# node endpoint
# ---------------------------------------------------------------------------


class _SocketCtx:
    __slots__ = ("node", "now")

    def __init__(self, node: "SocketNode") -> None:
        self.node = node
        self.now = node.current_tick()

    def send(self, dst: str, frame: Frame) -> None:
        self.node.send(dst, frame)

    def set_timer(self, delay: int, tag: str) -> None:
        self.node.set_timer(delay, tag)


class SocketNode:
    """One reactor endpoint on the real network.

    ``reactor`` follows the simulator contract: ``on_message(src, frame, ctx)``
    and ``on_timer(tag, ctx)``, both called from the single reactor thread.
    """

    def __init__(
        self,
        node_id: str,
        reactor,
        bind: tuple[str, int],
        peers: dict[str, tuple[str, int]],
        tick_ms: int = DEFAULT_TICK_MS,
        max_frame: int = DEFAULT_MAX_FRAME,
        queue_size: int = DEFAULT_QUEUE_SIZE,
    ) -> None:
        self.node_id = node_id
        self.reactor = reactor
        self.tick_ms = tick_ms
        self.max_frame = max_frame
        self.metrics = {
            "frames_in": 0, "frames_out": 0, "connects": 0,
            "reconnects": 0, "oversized_rejected": 0, "decode_errors": 0,
        }
        self.inq: queue.Queue = queue.Queue(maxsize=queue_size)
        self.outboxes: dict[str, _Outbox] = {}
        self._running = False
        self.connect_peers(peers)
        self._rx_seq: dict[str, int] = {}
        self._timers: list[tuple[float, int, str]] = []
        self._timer_seq = 0
        self._timer_lock = threading.Lock()
        self._stop = threading.Event()
        self._started = time.monotonic()
        # bound eagerly so the port is known before any peer starts dialing
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind(bind)
        self._threads: list[threading.Thread] = []
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()

    def connect_peers(self, peers: dict[str, tuple[str, int]]) -> None:
        for peer, addr in peers.items():
            if peer not in self.outboxes:
                outbox = _Outbox(self.node_id, peer, addr, self.max_frame, self.metrics)
                self.outboxes[peer] = outbox
                if self._running:
                    outbox.start()

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._server.listen(64)
        self._server.settimeout(0.2)
        self._started = time.monotonic()
        self._running = True
        accept = threading.Thread(target=self._accept_loop,
                                  name=f"accept:{self.node_id}", daemon=True)
        react = threading.Thread(target=self._reactor_loop,
                                 name=f"react:{self.node_id}", daemon=True)
        self._threads = [accept, react]
        accept.start()
        react.start()
        for outbox in self.outboxes.values():
            outbox.start()

    def stop(self) -> None:
        self._stop.set()
        self._running = False
        for outbox in self.outboxes.values():
            outbox.close()
        try:
            self._server.close()
        except OSError:
            pass
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        for t in self._threads:
            t.join(timeout=2.0)

    @property
    def port(self) -> int:
        return self._server.getsockname()[1]

    # -- reactor services ------------------------------------------------------

    def current_tick(self) -> int:
        return int((time.monotonic() - self._started) * 1000 / self.tick_ms)

    def send(self, dst: str, frame: Frame) -> None:
        if dst == self.node_id:
            self.inq.put(("msg", dst, encode_frame(frame)))
            return
        outbox = self.outboxes.get(dst)
        if outbox is None:
            log.warning("%s: no channel to %s, dropping frame", self.node_id, dst)
            return
        outbox.put(encode_frame(frame))

    def set_timer(self, delay: int, tag: str) -> None:
        deadline = time.monotonic() + delay * self.tick_ms / 1000.0
        with self._timer_lock:
            self._timer_seq += 1
            self._timers.append((deadline, self._timer_seq, tag))
            self._timers.sort()

    def call(self, fn) -> None:
        """Run fn(reactor, ctx) on the reactor thread (driver hand-off)."""
        self.inq.put(("call", "", fn))

    # -- internals --------------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            with self._conns_lock:
                self._conns.add(conn)
            t = threading.Thread(target=self._reader, args=(conn,),
                                 name=f"read:{self.node_id}", daemon=True)
            t.start()

    def _reader(self, conn: socket.socket) -> None:
        try:
            src = read_frame(conn, self.max_frame).decode("utf-8")
            while not self._stop.is_set():
                record = read_frame(conn, self.max_frame + _SEQ.size)
                if len(record) < _SEQ.size:
                    log.warning("%s: truncated record from %s", self.node_id, src)
                    break
                (seq,) = _SEQ.unpack(record[:_SEQ.size])
                expected = self._rx_seq.get(src, 0)
                if seq >= expected:
                    # a gap means the channel cursor was reset by our own
                    # restart; the skipped sequences were consumed before it
                    self._rx_seq[src] = seq + 1
                    self.inq.put(("msg", src, record[_SEQ.size:]))
                conn.sendall(_SEQ.pack(self._rx_seq[src]))
        except FrameTooLarge as err:
            self.metrics["oversized_rejected"] += 1
            log.error("%s: closing inbound channel: %s", self.node_id, err)
        except (ConnectionError, OSError):
            pass
        finally:
            with self._conns_lock:
                self._conns.discard(conn)
            conn.close()

    def _due_timers(self) -> list[str]:
        now = time.monotonic()
        due = []
        with self._timer_lock:
            while self._timers and self._timers[0][0] <= now:
                due.append(self._timers.pop(0)[2])
        return due

    def _next_deadline(self) -> float | None:
        with self._timer_lock:
            return self._timers[0][0] if self._timers else None

    def _reactor_loop(self) -> None:
        while not self._stop.is_set():
            for tag in self._due_timers():
                self._safely(self.reactor.on_timer, tag)
            deadline = self._next_deadline()
            timeout = 0.1 if deadline is None else max(0.0, min(0.1, deadline - time.monotonic()))
            try:
                kind, src, payload = self.inq.get(timeout=timeout)
            except queue.Empty:
                continue
            if kind == "call":
                self._safely_call(payload)
                continue
            try:
                frame = decode_frame(payload)
            except Exception:
                self.metrics["decode_errors"] += 1
                log.warning("%s: undecodable frame from %s", self.node_id, src)
                continue
            self.metrics["frames_in"] += 1
            self._safely(self.reactor.on_message, src, frame)

    def _safely(self, fn, *args) -> None:
        try:
            fn(*args, _SocketCtx(self))
        except Exception:
            log.exception("%s: reactor handler failed", self.node_id)

    def _safely_call(self, fn) -> None:
        try:
            fn(self.reactor, _SocketCtx(self))
        except Exception:
            log.exception("%s: injected call failed", self.node_id)


def loopback_mesh(
    node_ids: list[str],
    reactors: dict[str, object],
    tick_ms: int = DEFAULT_TICK_MS,
    max_frame: int = DEFAULT_MAX_FRAME,
) -> dict[str, SocketNode]:
    """Fully connected loopback nodes on OS-assigned ports, already started."""
    nodes = {
        nid: SocketNode(nid, reactors[nid], ("127.0.0.1", 0), {},
                        tick_ms=tick_ms, max_frame=max_frame)
        for nid in node_ids
    }
    addrs = {nid: ("127.0.0.1", node.port) for nid, node in nodes.items()}
    for nid, node in nodes.items():
        node.connect_peers({p: addrs[p] for p in node_ids if p != nid})
        node.start()
    return nodes
