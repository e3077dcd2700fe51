"""Streaming emotion inference over a framed socket protocol or a replayed file."""

from .buffer import RollingBuffer
from .engine import (
    EVENT_FIELDS,
    EVENT_SCHEMA,
    EmotionEvent,
    EngineStats,
    SessionError,
    StreamEngine,
    WindowSnapshot,
    validate_event_line,
)
from .session import (
    Handoff,
    LineWriter,
    TcpPublisher,
    fan_out,
    open_replay,
    parse_address,
    run_replay,
    run_sync,
    run_threaded,
    serve,
    socket_source,
)
from .wire import (
    StreamDecoder,
    StreamFrame,
    StreamHeader,
    WireFormatError,
    encode_frame,
    encode_header,
    frames_from_matrix,
    iter_stream,
    write_capture,
)

__all__ = [
    "EVENT_FIELDS", "EVENT_SCHEMA", "EmotionEvent", "EngineStats", "Handoff", "LineWriter",
    "RollingBuffer", "SessionError", "StreamDecoder", "StreamEngine", "StreamFrame", "StreamHeader",
    "TcpPublisher", "WindowSnapshot", "WireFormatError", "encode_frame", "encode_header", "fan_out",
    "frames_from_matrix", "iter_stream", "open_replay", "parse_address", "run_replay", "run_sync",
    "run_threaded", "serve", "socket_source", "validate_event_line", "write_capture",
]
