"""UDP ingestion: a stoppable OSC listener and the bounded frame queue.

The listener is a single-owner producer: one thread iterates it and feeds
the frame assembler. Malformed datagrams never kill the stream; they bump
``parse_errors`` and the iteration moves on. The queue between producer
and pipeline keeps the freshest frames: when full it drops the oldest
entry and counts the drop.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque

from .osc import OscError, OscMessage, flatten, parse_packet

DEFAULT_PORT = 8338  # FaceOSC's default


class BindFailed(Exception):
    pass


class UdpListener:
    """Receives datagrams and yields (t_ms, OscMessage) pairs.

    Bundles are flattened in element order; all messages of one datagram
    share the datagram's arrival time. Times are ms since listener start.
    """

    def __init__(self, port: int = DEFAULT_PORT, host: str = "0.0.0.0",
                 bufsize: int = 4096):
        self.parse_errors = 0
        self.datagrams = 0
        self._bufsize = bufsize
        self._stop = threading.Event()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self._sock.bind((host, port))
        except OSError as e:
            self._sock.close()
            raise BindFailed(f"cannot bind UDP {host}:{port}: {e}") from None
        self._sock.settimeout(0.25)
        self._t0 = time.monotonic()

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def stop(self) -> None:
        self._stop.set()

    def close(self) -> None:
        self.stop()
        self._sock.close()

    def poll(self) -> list:
        """Receive at most one datagram; [] on timeout or bad packet.

        Lets a caller interleave its own periodic work (stale-burst
        flushing) with reception during quiet stretches.
        """
        try:
            data, _addr = self._sock.recvfrom(self._bufsize)
        except socket.timeout:
            return []
        except OSError:
            return []
        t_ms = self.now_ms()
        self.datagrams += 1
        try:
            packet = parse_packet(data)
        except OscError:
            self.parse_errors += 1
            return []
        return [(t_ms, msg) for msg in flatten(packet)]

    def __iter__(self):
        while not self._stop.is_set():
            try:
                data, _addr = self._sock.recvfrom(self._bufsize)
            except socket.timeout:
                continue
            except OSError:
                break
            t_ms = self.now_ms()
            self.datagrams += 1
            try:
                packet = parse_packet(data)
            except OscError:
                self.parse_errors += 1
                continue
            for msg in flatten(packet):
                yield t_ms, msg


def udp_listen(port: int = DEFAULT_PORT, host: str = "0.0.0.0") -> UdpListener:
    """Open a listener; raises BindFailed when the port is taken."""
    return UdpListener(port=port, host=host)


class FrameQueue:
    """Bounded hand-off queue with two overflow policies.

    Default put() on a full queue evicts the oldest entry and increments
    ``dropped``; a live source would rather skip a stale frame than lag.
    put(..., block=True) instead waits for space, which file replay uses
    so no frame is ever lost.
    """

    def __init__(self, maxsize: int = 64):
        self.dropped = 0
        self._maxsize = maxsize
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False

    def put(self, item, block: bool = False) -> None:
        with self._cond:
            if block:
                while len(self._items) >= self._maxsize and not self._closed:
                    self._cond.wait(0.1)
                if self._closed:
                    return
            elif len(self._items) >= self._maxsize:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self._cond.notify()

    def get(self, timeout: float | None = None):
        """Next item, or None when the queue is closed and drained."""
        with self._cond:
            while not self._items:
                if self._closed:
                    return None
                if not self._cond.wait(timeout):
                    return None
            item = self._items.popleft()
            self._cond.notify()
            return item

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def finished(self) -> bool:
        """True once the queue is closed and fully drained."""
        with self._cond:
            return self._closed and not self._items

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)
