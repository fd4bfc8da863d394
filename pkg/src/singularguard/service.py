"""Newline-delimited JSON front end for the safety monitor.

Request line: ``{"q": [6 floats], "qdot": [6 floats]}``. In streaming mode
every request gets exactly one response line (the monitor event). In timed
mode a reader thread keeps the latest sample and the monitor loop emits one
event per tick at the monitor frequency, marking samples stale after
``stale_after`` missed intervals. Malformed requests get ``{"error": ...}``.
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading
import time
from typing import IO, Callable

from .fuzzy import FuzzyEngine
from .kinematics import KinematicModel
from .monitor import MonitorConfig, MonitorEvent, SafetyMonitor, SourceClosed, monitor_loop

log = logging.getLogger(__name__)


class RequestError(ValueError):
    pass


def parse_request(line: str | bytes) -> tuple[list[float], list[float]]:
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise RequestError(f"invalid JSON: {exc}") from exc
    if not isinstance(msg, dict) or "q" not in msg or "qdot" not in msg:
        raise RequestError('request must be an object with "q" and "qdot"')
    q, qdot = msg["q"], msg["qdot"]
    for name, v in (("q", q), ("qdot", qdot)):
        if not isinstance(v, list) or len(v) != 6:
            raise RequestError(f'"{name}" must be a list of 6 numbers')
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise RequestError(f'"{name}" must contain only numbers')
    return [float(x) for x in q], [float(x) for x in qdot]


def encode(record: dict) -> str:
    return json.dumps(record, allow_nan=False) + "\n"


def error_record(message: str) -> dict:
    return {"error": message}


def notice_record(kind: str, event: MonitorEvent) -> dict:
    return {"type": kind, "tick": event.tick, "ts": event.ts, "action": event.action.value}


def handle_line(monitor: SafetyMonitor, line: str | bytes) -> dict:
    try:
        q, qdot = parse_request(line)
    except RequestError as exc:
        return error_record(str(exc))
    return monitor.evaluate(q, qdot).to_dict()


def serve_stream(monitor: SafetyMonitor, rfile: IO, write: Callable[[str], None]) -> int:
    """One response per non-blank request line; returns the number of responses."""
    n = 0
    for line in rfile:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        if not line.strip():
            continue
        write(encode(handle_line(monitor, line)))
        n += 1
    return n


class LatestSample:
    """Holds the newest request; reports staleness when it stops changing."""

    def __init__(self, monitor: SafetyMonitor):
        self.monitor = monitor
        self._lock = threading.Lock()
        self._sample = None
        self._received = 0.0
        self._closed = False
        self._ready = threading.Event()

    def put(self, q, qdot) -> None:
        with self._lock:
            self._sample = (q, qdot)
            self._received = time.monotonic()
        self._ready.set()

    def close(self) -> None:
        self._closed = True
        self._ready.set()

    def __call__(self):
        self._ready.wait()
        with self._lock:
            if self._sample is None:
                raise SourceClosed()
            age = time.monotonic() - self._received
            limit = self.monitor.cfg.stale_after / self.monitor.cfg.f_monitor
            stale = age > limit
            if self._closed and stale:
                raise SourceClosed()
            return self._sample[0], self._sample[1], stale


def serve_timed(monitor: SafetyMonitor, rfile: IO, write: Callable[[str], None],
                stop: threading.Event | None = None) -> int:
    stop = stop or threading.Event()
    latest = LatestSample(monitor)
    write_lock = threading.Lock()

    def emit(record: dict) -> None:
        with write_lock:
            write(encode(record))

    def reader():
        for line in rfile:
            if isinstance(line, bytes):
                line = line.decode("utf-8", errors="replace")
            if not line.strip():
                continue
            try:
                latest.put(*parse_request(line))
            except RequestError as exc:
                emit(error_record(str(exc)))
        latest.close()

    t = threading.Thread(target=reader, daemon=True)
    t.start()
    return monitor_loop(
        latest,
        lambda ev: emit(ev.to_dict()),
        monitor,
        stop=stop,
        on_velocity_warning=lambda ev: emit(notice_record("velocity_warning", ev)),
        on_notify=lambda ev: emit(notice_record("operator_notification", ev)),
    )


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        srv: MonitorServer = self.server  # type: ignore[assignment]
        monitor = SafetyMonitor(srv.model, srv.engine, srv.cfg)

        def write(text: str) -> None:
            self.wfile.write(text.encode("utf-8"))
            self.wfile.flush()

        try:
            if srv.mode == "timed":
                serve_timed(monitor, self.rfile, write, srv.stop)
            else:
                serve_stream(monitor, self.rfile, write)
        except (BrokenPipeError, ConnectionResetError):
            log.info("client %s disconnected", self.client_address)


class MonitorServer(socketserver.ThreadingTCPServer):
    """TCP server; each connection gets its own monitor session."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], model: KinematicModel, engine: FuzzyEngine,
                 cfg: MonitorConfig | None = None, mode: str = "stream"):
        if mode not in ("stream", "timed"):
            raise ValueError(f"unknown mode {mode!r}")
        self.model, self.engine = model, engine
        self.cfg = cfg or MonitorConfig()
        self.mode = mode
        self.stop = threading.Event()
        super().__init__(address, _Handler)

    def shutdown(self) -> None:
        self.stop.set()
        super().shutdown()


def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)

