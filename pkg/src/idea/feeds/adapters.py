"""Feed adapters: turn an external source into a stream of raw record lines.

Each adapter yields ``bytes`` lines, or ``None`` when it is idle so the
caller can flush partially filled frames.
"""

from __future__ import annotations

import os
import selectors
import socket
import threading
import time

from ..errors import BindError

_IDLE = 0.1
_DRAIN_IDLE = 0.25


class SocketListener:
    """TCP listener accepting any number of clients sending newline-delimited records."""

    def __init__(self, host, port):
        self.host = host
        self._stop = threading.Event()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
            self._sock.listen(16)
        except OSError as e:
            self._sock.close()
            raise BindError(f"cannot listen on {host}:{port}: {e.strerror or e}") from None
        self._sock.setblocking(False)
        self.port = self._sock.getsockname()[1]

    @property
    def address(self):
        return (self.host, self.port)

    def stop(self):
        self._stop.set()

    def lines(self, cancel=None):
        sel = selectors.DefaultSelector()
        sel.register(self._sock, selectors.EVENT_READ, None)
        buffers = {}
        listening = True
        last_data = time.monotonic()
        try:
            while True:
                if cancel is not None and cancel.is_set():
                    return
                if self._stop.is_set() and listening:
                    sel.unregister(self._sock)
                    self._sock.close()
                    listening = False
                    last_data = time.monotonic()
                if not listening and (not buffers or time.monotonic() - last_data > _DRAIN_IDLE):
                    break
                events = sel.select(_IDLE)
                if not events:
                    yield None
                    continue
                for key, _ in events:
                    if key.data is None:
                        try:
                            conn, _ = self._sock.accept()
                        except OSError:
                            continue
                        conn.setblocking(False)
                        sel.register(conn, selectors.EVENT_READ, b"")
                        buffers[conn] = bytearray()
                        continue
                    conn = key.fileobj
                    try:
                        data = conn.recv(65536)
                    except BlockingIOError:
                        continue
                    except OSError:
                        data = b""
                    buf = buffers[conn]
                    if not data:
                        sel.unregister(conn)
                        conn.close()
                        del buffers[conn]
                        if buf.strip():
                            yield bytes(buf).rstrip(b"\r")
                        continue
                    last_data = time.monotonic()
                    buf += data
                    start = 0
                    while True:
                        nl = buf.find(b"\n", start)
                        if nl < 0:
                            break
                        line = bytes(buf[start:nl]).rstrip(b"\r")
                        start = nl + 1
                        if line.strip():
                            yield line
                    del buf[:start]
            for buf in buffers.values():
                if buf.strip():
                    yield bytes(buf).rstrip(b"\r")
        finally:
            for conn in list(buffers):
                try:
                    sel.unregister(conn)
                except (KeyError, ValueError):
                    pass
                conn.close()
            if listening:
                self._sock.close()
            sel.close()


def _paced(lines, rate, stop, cancel):
    """Yield ``lines`` no faster than ``rate`` per second (None: unpaced)."""
    start = time.perf_counter()
    for i, line in enumerate(lines):
        if stop.is_set() or (cancel is not None and cancel.is_set()):
            return
        if rate:
            due = start + i / rate
            while True:
                wait = due - time.perf_counter()
                if wait <= 0:
                    break
                if wait > _IDLE:
                    yield None
                    time.sleep(_IDLE)
                else:
                    time.sleep(wait)
        yield line


class FileReplay:
    """Replays a newline-delimited file; partition ``p`` of ``k`` takes every k-th line."""

    def __init__(self, path, rate=None, partitions=1):
        if not os.path.isfile(path):
            raise FileNotFoundError(path)
        self.path = path
        self.rate = rate
        self.partitions = partitions
        self._stop = threading.Event()

    def stop(self):
        self._stop.set()

    def _lines(self, partition):
        with open(self.path, "rb") as fh:
            for i, line in enumerate(fh):
                if i % self.partitions == partition:
                    line = line.rstrip(b"\r\n")
                    if line.strip():
                        yield line

    def lines(self, partition=0, cancel=None):
        rate = self.rate / self.partitions if self.rate else None
        return _paced(self._lines(partition), rate, self._stop, cancel)


class LinesReplay:
    """Like FileReplay over an in-memory sequence of byte lines."""

    def __init__(self, lines, rate=None, partitions=1):
        self.data = lines
        self.rate = rate
        self.partitions = partitions
        self._stop = threading.Event()

    def stop(self):
        self._stop.set()

    def lines(self, partition=0, cancel=None):
        rate = self.rate / self.partitions if self.rate else None
        part = (line if type(line) is bytes else str(line).encode("utf-8")
                for i, line in enumerate(self.data) if i % self.partitions == partition)
        return _paced(part, rate, self._stop, cancel)
