import io
import json
import socket
import threading
import time
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegemotion.core import SELECTED_CHANNELS
from eegemotion.ensemble.forest import ContractError
from eegemotion.io import Recording, SyntheticSpec, generate_synthetic, write_recording
from eegemotion.realtime import (
    EVENT_FIELDS,
    Handoff,
    LineWriter,
    RollingBuffer,
    SessionError,
    StreamDecoder,
    StreamEngine,
    StreamFrame,
    StreamHeader,
    TcpPublisher,
    WireFormatError,
    encode_frame,
    encode_header,
    fan_out,
    frames_from_matrix,
    iter_stream,
    open_replay,
    parse_address,
    run_replay,
    run_sync,
    run_threaded,
    serve,
    socket_source,
    validate_event_line,
    write_capture,
)

FS = 128
HEADER = StreamHeader(FS, SELECTED_CHANNELS)


def noise_frames(seconds, seed=0, header=HEADER, seq0=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((header.n_channels, int(seconds * header.fs)))
    return list(frames_from_matrix(x, header.fs, seq0=seq0, t0=seq0 / header.fs))


def collect(engine, frames):
    events = []
    run_sync(engine, frames, events.append)
    return events


# -- wire ------------------------------------------------------------------


def test_wire_roundtrip_bytewise():
    frames = noise_frames(0.1)
    blob = encode_header(HEADER) + b"".join(encode_frame(f) for f in frames)
    dec = StreamDecoder()
    items = []
    for i in range(len(blob)):
        items += dec.feed(blob[i : i + 1])
    dec.finish()
    assert items[0] == HEADER
    got = items[1:]
    assert [f.seq for f in got] == [f.seq for f in frames]
    assert all(np.array_equal(a.samples, b.samples) for a, b in zip(got, frames))
    assert got[3].t == pytest.approx(3 / FS, abs=1e-6)


def test_wire_header_layout():
    h = encode_header(StreamHeader(256, ("T7", "Fp1")))
    assert h == b"EEG1" + (256).to_bytes(4, "little") + (2).to_bytes(2, "little") + b"\x02\x00T7\x03\x00Fp1"
    assert HEADER.frame_size == 16 + 4 * 8


def test_wire_errors_name_offsets(tmp_path):
    with pytest.raises(WireFormatError) as e:
        StreamDecoder().feed(b"XXXX\x00\x00\x00\x00\x00\x00")
    assert e.value.offset == 0
    hdr = encode_header(HEADER)
    frame = encode_frame(noise_frames(0.01)[0])
    dec = StreamDecoder()
    dec.feed(hdr + frame + frame[:10])
    with pytest.raises(WireFormatError) as e:
        dec.finish()
    assert e.value.offset == len(hdr) + len(frame)
    bad = bytearray(frame)
    bad[16:20] = np.float32(np.inf).tobytes()
    with pytest.raises(WireFormatError) as e:
        StreamDecoder().feed(hdr + frame + bytes(bad))
    assert e.value.offset == len(hdr) + len(frame) + 16
    with pytest.raises(WireFormatError):
        StreamDecoder().finish()


def test_capture_file_roundtrip(tmp_path):
    frames = noise_frames(0.5)
    p = tmp_path / "cap.eeg"
    with open(p, "wb") as fh:
        write_capture(fh, HEADER, frames)
    with open(p, "rb") as fh:
        items = list(iter_stream(fh, chunk=7))
    assert items[0] == HEADER and len(items) == 1 + len(frames)
    hdr, it = open_replay(p)
    assert hdr == HEADER and len(list(it)) == len(frames)


def test_open_replay_rejects_unknown_and_truncated(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"JUNKJUNK")
    with pytest.raises(WireFormatError) as e:
        open_replay(p)
    assert e.value.offset == 0
    frames = noise_frames(0.1)
    with open(p, "wb") as fh:
        write_capture(fh, HEADER, frames)
    p.write_bytes(p.read_bytes()[:-5])
    hdr, it = open_replay(p)
    with pytest.raises(WireFormatError, match="truncated"):
        list(it)


def test_parse_address():
    assert parse_address("tcp://127.0.0.1:9000") == ("127.0.0.1", 9000)
    assert parse_address(":9000") == ("0.0.0.0", 9000)
    with pytest.raises(ValueError):
        parse_address("localhost")


# -- ring buffer -----------------------------------------------------------


@given(st.integers(1, 20), st.lists(st.integers(1, 30), max_size=20))
@settings(max_examples=100)
def test_ring_matches_deque(capacity, sizes):
    ring = RollingBuffer(2, capacity)
    ref = deque(maxlen=capacity)
    k = 0
    for n in sizes:
        block = np.arange(k, k + n, dtype=float)
        k += n
        ring.push(np.stack([block, -block]))
        ref.extend(block.tolist())
        snap = ring.snapshot()
        assert snap[0].tolist() == list(ref)
        assert snap[1].tolist() == [-v for v in ref]
        assert ring.full == (len(ref) == capacity)


def test_ring_reset():
    ring = RollingBuffer(1, 4)
    ring.push(np.ones((1, 4)))
    ring.reset()
    assert not ring.full and ring.snapshot().shape == (1, 0)
    with pytest.raises(ValueError):
        RollingBuffer(1, 0)


# -- engine ----------------------------------------------------------------


def test_640_frames_one_event_1280_two(models):
    eng = StreamEngine(models, HEADER)
    ev = collect(eng, noise_frames(5.0))
    assert len(ev) == 1 and ev[0].window_end_t == pytest.approx(5.0)
    eng = StreamEngine(models, HEADER)
    ev = collect(eng, noise_frames(10.0))
    assert [e.window_end_t for e in ev] == pytest.approx([5.0, 10.0])
    assert len(collect(StreamEngine(models, HEADER), noise_frames(4.99))) == 0


def test_overlapping_cadence(models):
    eng = StreamEngine(models, HEADER, cadence_s=1.0)
    ev = collect(eng, noise_frames(8.0))
    assert [e.window_end_t for e in ev] == pytest.approx([5.0, 6.0, 7.0, 8.0])
    with pytest.raises(ContractError):
        StreamEngine(models, HEADER, cadence_s=1 / 300)


def test_gap_suppresses_events_until_refilled(models):
    frames = noise_frames(2.0) + noise_frames(10.0, seed=1, seq0=320)
    eng = StreamEngine(models, HEADER)
    ev = collect(eng, frames)
    assert eng.stats.gaps == 1
    # gap at 2 s, resume at 2.5 s; first window needs 5 s of contiguous data
    assert ev[0].window_end_t == pytest.approx(7.5)
    assert [e.window_end_t for e in ev] == pytest.approx([7.5, 12.5])


def test_events_never_span_a_gap(models):
    frames = noise_frames(4.0) + noise_frames(4.0, seed=1, seq0=600) + noise_frames(6.0, seed=2, seq0=1200)
    eng = StreamEngine(models, HEADER)
    snaps = []
    for f in frames:
        s = eng.ingest(f)
        if s is not None:
            snaps.append(s)
    assert eng.stats.gaps == 2
    assert [s.end_t for s in snaps] == pytest.approx([1200 / FS + 5.0])


def test_event_schema_and_probabilities(models):
    ev = collect(StreamEngine(models, HEADER), noise_frames(5.0))[0]
    d = validate_event_line(ev.to_json())
    assert tuple(d) == EVENT_FIELDS
    for p in d["vad_probs"].values():
        assert abs(sum(p) - 1.0) <= 1e-9
    assert "latency_ms" not in ev.payload()
    assert d["is_passion"] == (d["emotion"] in {"Admiration", "Love", "Hate", "Desire", "Joy", "Sadness"})


def test_validate_event_line_rejects_bad_records(models):
    ev = collect(StreamEngine(models, HEADER), noise_frames(5.0))[0]
    d = json.loads(ev.to_json())
    for mutate in (
        lambda x: x.pop("emotion"),
        lambda x: x.update(schema="other/2"),
        lambda x: x["vad_level"].update(valence=3),
        lambda x: x["vad_probs"].update(arousal=[0.5, 0.6, 0.0]),
        lambda x: x.update(latency_ms=-1),
    ):
        bad = json.loads(json.dumps(d))
        mutate(bad)
        with pytest.raises(ValueError):
            validate_event_line(json.dumps(bad))


def test_zero_window_is_deterministic_and_finite(models):
    zeros = list(frames_from_matrix(np.zeros((8, 640)), FS))
    a = collect(StreamEngine(models, HEADER), zeros)[0]
    b = collect(StreamEngine(models, HEADER), zeros)[0]
    assert a.payload() == b.payload()
    assert "NaN" not in a.to_json()


def test_love_exemplar_stream(models, runtime_spec):
    from dataclasses import replace

    spec = replace(runtime_spec, n_subjects=1, n_trials=1, trial_length_s=30.0, levels=(1, 1, -1))
    rec = generate_synthetic(spec, seed=99)[0]
    ev = collect(StreamEngine(models, HEADER), frames_from_matrix(rec.samples, FS))
    assert len(ev) == 6
    assert [e.emotion.name for e in ev] == ["Love"] * 6
    assert all(e.emotion.is_passion for e in ev)


def test_latency_under_budget(models):
    eng = StreamEngine(models, HEADER)
    eng.warmup()
    ev = collect(eng, noise_frames(30.0))
    assert max(e.latency_ms for e in ev) < 500
    assert list(eng.stats.latencies_ms) == [e.latency_ms for e in ev]


def test_ingest_throughput(models):
    eng = StreamEngine(models, HEADER)
    frames = noise_frames(4.9)
    t0 = time.perf_counter()
    for f in frames:
        eng.ingest(f)
    # buffering a whole window's worth of frames must cost < 5% of the 5 s cadence
    assert time.perf_counter() - t0 < 0.25


def test_contract_errors_at_startup(models):
    with pytest.raises(ContractError, match="T7"):
        StreamEngine(models, StreamHeader(FS, tuple(c for c in SELECTED_CHANNELS if c != "T7")))
    with pytest.raises(ContractError, match="multiple"):
        StreamEngine(models, StreamHeader(100, SELECTED_CHANNELS))
    eng = StreamEngine(models, HEADER)
    with pytest.raises(SessionError):
        eng.ingest(StreamFrame(0, 0.0, np.zeros(7)))


def test_extra_channels_and_higher_rate(models):
    chans = ("Cz",) + SELECTED_CHANNELS
    rng = np.random.default_rng(0)
    x = rng.standard_normal((9, 512 * 10))
    hdr = StreamHeader(512, chans)
    ev = collect(StreamEngine(models, hdr), frames_from_matrix(x, 512))
    assert [e.window_end_t for e in ev] == pytest.approx([5.0, 10.0])


def test_stream_features_match_offline_causal_chain(models, cfg, runtime_recs):
    from eegemotion.dsp import WindowSpec
    from eegemotion.pipeline import extract_features

    rec = runtime_recs[0]
    table = extract_features([rec], SELECTED_CHANNELS, WindowSpec(5.0, 5.0), cfg)
    eng = StreamEngine(models, HEADER)
    feats = []
    for f in frames_from_matrix(rec.samples, FS):
        s = eng.ingest(f)
        if s is not None:
            feats.append(eng.features(s.samples))
    assert np.allclose(np.array(feats), table.X, rtol=1e-6)


# -- runners ---------------------------------------------------------------


def test_threaded_and_sync_payloads_identical(models):
    frames = noise_frames(20.0)
    a, b = [], []
    run_sync(StreamEngine(models, HEADER), frames, a.append)
    stats = run_threaded(StreamEngine(models, HEADER), frames, b.append, pace=False)
    # a fast consumer may still lose windows when unpaced; compare what was emitted
    kept = {e.window_end_t: e.payload() for e in a}
    assert all(kept[e.window_end_t] == e.payload() for e in b)
    assert stats.events + stats.dropped == stats.windows == 4


def test_slow_inference_drops_instead_of_queueing(models):
    frames = noise_frames(30.0)
    out = []

    def slow_sink(ev):
        time.sleep(0.3)
        out.append(ev)

    stats = run_threaded(StreamEngine(models, HEADER, cadence_s=0.5), frames, slow_sink, pace=False)
    assert stats.dropped > 0
    assert stats.events + stats.dropped == stats.windows
    assert len(out) == stats.events


def test_handoff_single_slot():
    h = Handoff()
    assert h.offer(1)
    assert not h.offer(2)
    assert h.take() == 1
    assert not h.offer(3)  # still busy
    h.done()
    assert h.offer(4)
    h.close()


def test_worker_error_surfaces(models):
    def boom(ev):
        raise RuntimeError("sink failed")

    with pytest.raises(RuntimeError, match="sink failed"):
        run_threaded(StreamEngine(models, HEADER), noise_frames(12.0), boom)


def test_run_replay_recording_max(models, tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "r.eegr"
    write_recording(p, Recording(128.0, SELECTED_CHANNELS, rng.standard_normal((8, 128 * 20)).astype(np.float32)))
    buf = io.StringIO()
    stats = run_replay(lambda h: StreamEngine(models, h), p, "max", LineWriter(buf))
    lines = buf.getvalue().splitlines()
    assert len(lines) == stats.events == 4
    for ln in lines:
        validate_event_line(ln)
    with pytest.raises(ValueError):
        run_replay(lambda h: StreamEngine(models, h), p, "2x", LineWriter(buf))


def test_paced_replay_follows_capture_clock(models, tmp_path):
    p = tmp_path / "r.eeg"
    with open(p, "wb") as fh:
        write_capture(fh, HEADER, noise_frames(10.0))
    times = []
    t0 = time.monotonic()
    run_replay(lambda h: StreamEngine(models, h), p, "1x", lambda ev: times.append(time.monotonic() - t0))
    assert len(times) == 2
    assert times[0] == pytest.approx(5.0, abs=0.1)
    assert times[1] - times[0] == pytest.approx(5.0, abs=0.1)


def test_fan_out_and_publisher(models):
    ev = collect(StreamEngine(models, HEADER), noise_frames(5.0))[0]
    pub = TcpPublisher("127.0.0.1:0")
    try:
        sub = socket.create_connection(pub.address)
        sub.settimeout(5)
        deadline = time.time() + 5
        while not pub._clients and time.time() < deadline:
            time.sleep(0.01)
        buf = io.StringIO()
        fan_out([pub, LineWriter(buf)])(ev)
        line = sub.makefile("r").readline()
        assert line.strip() == buf.getvalue().strip() == ev.to_json()
        sub.close()
    finally:
        pub.close()


def test_serve_over_tcp(models):
    ready = threading.Event()
    bound = {}
    events = []

    def on_ready(addr):
        bound["addr"] = addr
        ready.set()

    th = threading.Thread(
        target=lambda: bound.setdefault("stats", serve(lambda h: StreamEngine(models, h), "127.0.0.1:0", events.append, on_ready))
    )
    th.start()
    assert ready.wait(5)
    with socket.create_connection(bound["addr"]) as c:
        c.sendall(encode_header(HEADER))
        for f in noise_frames(10.0):
            c.sendall(encode_frame(f))
            time.sleep(0.0005)
    th.join(10)
    assert [e.window_end_t for e in events] == pytest.approx([5.0, 10.0])
    assert bound["stats"].frames == 1280


def test_socket_source_header_split_across_packets():
    a, b = socket.socketpair()
    blob = encode_header(HEADER) + b"".join(encode_frame(f) for f in noise_frames(0.05))
    a.sendall(blob)
    a.close()
    hdr, frames = socket_source(b, chunk=5)
    assert hdr == HEADER and len(list(frames)) == 6
    b.close()
