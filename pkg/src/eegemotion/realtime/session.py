"""Sources (replay file, TCP listener), sinks (stdout, TCP publisher) and runners."""

from __future__ import annotations

import logging
import socket
import threading
import time
from pathlib import Path
from typing import Callable, Iterable, Iterator, TextIO

from ..io import MAGIC as RECORDING_MAGIC
from ..io import read_recording
from .engine import EmotionEvent, EngineStats, StreamEngine
from .wire import MAGIC as WIRE_MAGIC
from .wire import StreamDecoder, StreamFrame, StreamHeader, WireFormatError, frames_from_matrix, iter_stream

log = logging.getLogger(__name__)

SPEEDS = ("1x", "max")

Sink = Callable[[EmotionEvent], None]


def parse_address(addr: str) -> tuple[str, int]:
    """``tcp://host:port`` or ``host:port``; an empty host means all interfaces."""
    if addr.startswith("tcp://"):
        addr = addr[len("tcp://") :]
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address {addr!r} is not host:port")
    return host or "0.0.0.0", int(port)


# -- sources ----------------------------------------------------------------


def open_replay(path) -> tuple[StreamHeader, Iterator[StreamFrame]]:
    """Open a wire capture or a recording file as a frame source."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == RECORDING_MAGIC:
        rec = read_recording(path)
        if abs(rec.fs - round(rec.fs)) > 1e-9:
            raise WireFormatError(f"recording rate {rec.fs} Hz is not an integer", 0)
        header = StreamHeader(int(round(rec.fs)), tuple(rec.channels))
        return header, frames_from_matrix(rec.samples, rec.fs)
    if magic != WIRE_MAGIC:
        raise WireFormatError("not a wire capture or recording (bad magic)", 0)

    fh = open(path, "rb")
    items = iter_stream(fh)
    try:
        header = next(items)
    except BaseException:
        fh.close()
        raise

    def frames():
        try:
            yield from items
        finally:
            fh.close()

    return header, frames()


def socket_source(conn: socket.socket, chunk: int = 4096) -> tuple[StreamHeader, Iterator[StreamFrame]]:
    """Read the header from a connected socket, then yield frames until EOF."""
    dec = StreamDecoder()
    pending: list = []
    while dec.header is None:
        data = conn.recv(chunk)
        if not data:
            dec.finish()
        pending += dec.feed(data)
    header = pending.pop(0)

    def frames():
        yield from pending
        while True:
            data = conn.recv(chunk)
            if not data:
                dec.finish()
                return
            yield from dec.feed(data)

    return header, frames()


# -- sinks ------------------------------------------------------------------


class LineWriter:
    def __init__(self, out: TextIO):
        self.out = out

    def __call__(self, event: EmotionEvent) -> None:
        self.out.write(event.to_json() + "\n")
        self.out.flush()


class TcpPublisher:
    """Broadcast event lines to every connected subscriber."""

    def __init__(self, addr: str):
        host, port = parse_address(addr)
        self._server = socket.create_server((host, port), reuse_port=False)
        self._server.settimeout(0.2)
        self.address = self._server.getsockname()[:2]
        self._clients: list[socket.socket] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept, name="event-publisher", daemon=True)
        self._thread.start()

    def _accept(self) -> None:
        while not self._stop.is_set():
            try:
                conn, peer = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            log.info("event subscriber connected from %s:%d", *peer[:2])
            with self._lock:
                self._clients.append(conn)

    def __call__(self, event: EmotionEvent) -> None:
        line = (event.to_json() + "\n").encode()
        with self._lock:
            alive = []
            for c in self._clients:
                try:
                    c.sendall(line)
                    alive.append(c)
                except OSError:
                    c.close()
            self._clients = alive

    def close(self) -> None:
        self._stop.set()
        self._thread.join()
        self._server.close()
        with self._lock:
            for c in self._clients:
                c.close()
            self._clients = []


def fan_out(sinks: Iterable[Sink]) -> Sink:
    sinks = list(sinks)

    def emit(event: EmotionEvent) -> None:
        for s in sinks:
            s(event)

    return emit


# -- runners ----------------------------------------------------------------


class Handoff:
    """Single-slot handoff between the ingest and inference roles.

    ``offer`` refuses a new window while one is waiting or being processed,
    so at most one window is ever in flight.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._item = None
        self._busy = False
        self._closed = False

    def offer(self, item) -> bool:
        with self._cond:
            if self._item is not None or self._busy:
                return False
            self._item = item
            self._cond.notify()
            return True

    def take(self):
        with self._cond:
            while self._item is None and not self._closed:
                self._cond.wait()
            if self._item is None:
                return None
            item, self._item = self._item, None
            self._busy = True
            return item

    def done(self) -> None:
        with self._cond:
            self._busy = False
            self._cond.notify_all()

    def drain(self) -> None:
        """Block until the pending window (if any) has been processed."""
        with self._cond:
            while not self._closed and (self._item is not None or self._busy):
                self._cond.wait()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


def run_sync(engine: StreamEngine, frames: Iterable[StreamFrame], sink: Sink) -> EngineStats:
    """Ingest and infer on the calling thread; nothing is ever dropped."""
    for frame in frames:
        snap = engine.ingest(frame)
        if snap is not None:
            sink(engine.infer(snap))
    return engine.stats


def run_threaded(
    engine: StreamEngine,
    frames: Iterable[StreamFrame],
    sink: Sink,
    pace: bool = False,
    clock: Callable[[], float] = time.monotonic,
) -> EngineStats:
    """Ingest on the calling thread and infer on a worker.

    With ``pace`` the frames are released at their capture-time offsets,
    which turns a file into a live-like source.
    """
    handoff = Handoff()
    errors: list[BaseException] = []

    def worker():
        while True:
            snap = handoff.take()
            if snap is None:
                return
            try:
                sink(engine.infer(snap))
            except BaseException as exc:  # surface on the ingest side
                errors.append(exc)
                handoff.close()
                return
            finally:
                handoff.done()

    th = threading.Thread(target=worker, name="inference", daemon=True)
    th.start()
    t_first = None
    wall0 = 0.0
    try:
        for frame in frames:
            if errors:
                break
            if pace:
                if t_first is None:
                    t_first, wall0 = frame.t, clock()
                ahead = (frame.t - t_first) - (clock() - wall0)
                if ahead > 0.0005:
                    time.sleep(ahead)
            snap = engine.ingest(frame)
            if snap is not None and not handoff.offer(snap):
                engine.stats.dropped += 1
                log.warning("inference still busy; window ending at %.3f s dropped", snap.end_t)
    finally:
        # Let the in-flight window finish, then stop the worker.
        handoff.drain()
        handoff.close()
        th.join()
    if errors:
        raise errors[0]
    return engine.stats


def run_replay(engine_factory, path, speed: str, sink: Sink) -> EngineStats:
    """Replay a file. ``engine_factory(header)`` builds the engine after the
    header has been read, so contract errors surface before any frame."""
    if speed not in SPEEDS:
        raise ValueError(f"speed must be one of {SPEEDS}")
    header, frames = open_replay(path)
    engine = engine_factory(header)
    engine.warmup()
    if speed == "max":
        return run_sync(engine, frames, sink)
    return run_threaded(engine, frames, sink, pace=True)


def serve(engine_factory, addr: str, sink: Sink, ready: Callable[[tuple], None] | None = None) -> EngineStats:
    """Accept one acquisition connection and stream events until it closes."""
    host, port = parse_address(addr)
    with socket.create_server((host, port)) as server:
        bound = server.getsockname()[:2]
        log.info("listening for EEG frames on %s:%d", *bound)
        if ready is not None:
            ready(bound)
        conn, peer = server.accept()
    with conn:
        log.info("acquisition connected from %s:%d", *peer[:2])
        header, frames = socket_source(conn)
        engine = engine_factory(header)
        engine.warmup()
        return run_threaded(engine, frames, sink)
