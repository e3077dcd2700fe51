import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegemotion.core import COMPONENTS, DomainError, VadRating, discretize_vad
from eegemotion.features import band_power_matrix
from eegemotion.io import (
    MANIFEST,
    Recording,
    RecordingFormatError,
    SyntheticSpec,
    dumps_recording,
    generate_synthetic,
    import_matrix_dataset,
    loads_recording,
    pink_noise,
    read_dataset,
    write_dataset,
)


def rec(n=256, label=True, channels=("Fp1", "T7")):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((len(channels), n)).astype(np.float32).astype(float)
    return Recording(128.0, channels, x, "s01", "t02", VadRating(2.0, 5.0, 8.5) if label else None)


@pytest.mark.parametrize("label", [True, False])
def test_recording_roundtrip(label):
    r = rec(label=label)
    back = loads_recording(dumps_recording(r))
    assert back.channels == r.channels and back.fs == r.fs
    assert np.array_equal(back.samples, r.samples)
    assert back.label == r.label
    assert (back.subject_id, back.trial_id) == ("s01", "t02")


@given(st.integers(0, 300), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_recording_roundtrip_shapes(n, k):
    r = rec(n=n, channels=("Fp1", "F7", "T7", "O2")[:k])
    assert np.array_equal(loads_recording(dumps_recording(r)).samples, r.samples)


def test_empty_file_rejected_at_offset_zero():
    with pytest.raises(RecordingFormatError) as e:
        loads_recording(b"")
    assert e.value.offset == 0


def test_bad_magic():
    with pytest.raises(RecordingFormatError) as e:
        loads_recording(b"XXXX" + dumps_recording(rec())[4:])
    assert e.value.field == "magic"


def test_truncated_samples_named():
    data = dumps_recording(rec(label=False))
    with pytest.raises(RecordingFormatError) as e:
        loads_recording(data[:-7])
    assert e.value.field == "samples" and e.value.offset is not None


def test_channel_count_mismatch_named():
    data = dumps_recording(rec(label=False, channels=("Fp1", "T7")))
    # drop one channel row of samples
    bad = data[: len(data) - 4 * 256]
    with pytest.raises(RecordingFormatError) as e:
        loads_recording(bad)
    assert e.value.field == "channels"
    assert "2 channels" in str(e.value) and "1 rows" in str(e.value)


def test_nan_sample_offset():
    r = rec(label=False)
    data = bytearray(dumps_recording(r))
    hlen = struct.unpack_from("<I", data, 6)[0]
    off = 10 + hlen + 4 * 5
    data[off : off + 4] = np.float32(np.nan).tobytes()
    with pytest.raises(RecordingFormatError) as e:
        loads_recording(bytes(data))
    assert e.value.offset == off


def test_recording_validation():
    with pytest.raises(DomainError):
        Recording(128.0, ("Fp1",), np.zeros((2, 4)))
    with pytest.raises(DomainError):
        Recording(128.0, ("Fp1",), np.array([[np.inf]]))


def test_dataset_roundtrip(tmp_path):
    recs = [rec(), Recording(128.0, ("Fp1", "T7"), np.zeros((2, 10)), "s02", "t01")]
    write_dataset(tmp_path, recs)
    assert (tmp_path / MANIFEST).read_text().splitlines()[0].split("\t")[:3] == ["file", "subject_id", "trial_id"]
    back = read_dataset(tmp_path)
    assert [r.trial_id for r in back] == ["t02", "t01"]
    assert back[1].label is None


def test_dataset_errors(tmp_path):
    with pytest.raises(RecordingFormatError):
        read_dataset(tmp_path)
    write_dataset(tmp_path, [rec()])
    (tmp_path / "s01_t02.eegr").write_bytes(b"")
    with pytest.raises(RecordingFormatError, match="s01_t02.eegr"):
        read_dataset(tmp_path)


def test_pink_noise_is_unit_variance_and_pink():
    rng = np.random.default_rng(1)
    x = pink_noise(rng, (4, 128 * 60), 128.0)
    assert np.allclose(x.std(axis=1), 1.0)
    bp = band_power_matrix(x, 128.0).mean(axis=0)
    # 1/f density: low bands dominate
    assert bp[0] > bp[2] > bp[4] / 10


def test_synthetic_is_deterministic_and_labelled():
    spec = SyntheticSpec(n_subjects=2, n_trials=3, trial_length_s=6.0)
    a = generate_synthetic(spec, seed=4)
    b = generate_synthetic(spec, seed=4)
    c = generate_synthetic(spec, seed=5)
    assert len(a) == 6
    assert all(np.array_equal(x.samples, y.samples) and x.label == y.label for x, y in zip(a, b))
    assert not np.array_equal(a[0].samples, c[0].samples)
    assert [r.subject_id for r in a] == ["s01"] * 3 + ["s02"] * 3
    # float32-exact so recording files round-trip bit-for-bit
    assert np.array_equal(a[0].samples, a[0].samples.astype(np.float32))


def test_synthetic_planted_amplitude_follows_level():
    spec = SyntheticSpec(n_subjects=1, n_trials=9, trial_length_s=10.0, noise_sigma=0.0)
    for r in generate_synthetic(spec, seed=0):
        lv = discretize_vad(r.label)
        t7 = r.channels.index("T7")
        bp = band_power_matrix(r.samples[t7], r.fs)
        # sine of amplitude A has power A^2 / 2
        for comp, band in (("valence", 1), ("arousal", 4), ("dominance", 3)):
            amp = 10.0 * (getattr(lv, comp) + 2) / 2
            assert bp[band] == pytest.approx(amp * amp / 2, rel=0.05)
        # antiphase on the partner channel keeps the channel mean free of the signature
        assert np.allclose(r.samples[t7], -r.samples[r.channels.index("T8")], atol=1e-5)


def test_forced_levels_and_snr():
    spec = SyntheticSpec(n_subjects=1, n_trials=2, trial_length_s=5.0, levels=(1, -1, 0))
    for r in generate_synthetic(spec):
        assert discretize_vad(r.label).as_tuple() == (1, -1, 0)
    assert generate_synthetic(spec.with_snr(0.0))[0].samples.std() == pytest.approx(1.0, rel=0.05)
    assert spec.with_snr(3.0).signatures["valence"].amplitude == 3.0


def test_label_noise_rate_and_stream_independence():
    base = SyntheticSpec(n_subjects=4, n_trials=50, trial_length_s=1.0, channels=("T7", "T8"))
    noisy = SyntheticSpec(n_subjects=4, n_trials=50, trial_length_s=1.0, channels=("T7", "T8"), label_noise=0.3)
    a = generate_synthetic(base, seed=2)
    b = generate_synthetic(noisy, seed=2)
    # the signal is identical; only the stored ratings change
    assert all(np.array_equal(x.samples, y.samples) for x, y in zip(a, b))
    flips = [
        getattr(discretize_vad(x.label), c) != getattr(discretize_vad(y.label), c)
        for x, y in zip(a, b) for c in COMPONENTS
    ]
    assert 0.2 < np.mean(flips) < 0.4


def test_spec_validation():
    with pytest.raises(DomainError):
        SyntheticSpec(n_subjects=0)
    with pytest.raises(DomainError):
        SyntheticSpec(label_noise=1.5)
    with pytest.raises(DomainError):
        SyntheticSpec(channels=("Fp1", "F7"))  # T7/T8 signatures missing
    with pytest.raises(DomainError):
        SyntheticSpec(channels=("Bogus",), signatures={})


def test_import_matrix_dataset(tmp_path):
    rng = np.random.default_rng(0)
    chans = np.array(["Fp1", "T7"])
    data = rng.standard_normal((2, 2, 128 * 8))
    labels = np.array([[2.0, 5.0, 8.0, 1.0], [9.0, 1.0, 4.0, 1.0]])
    np.savez(tmp_path / "s01.npz", data=data, labels=labels, channels=chans, fs=128.0)
    recs, report = import_matrix_dataset(tmp_path, drop_first_s=3.0, expected_subjects=["s01", "s02"])
    assert report.missing == ["s02"] and report.subjects == ["s01"]
    assert len(recs) == 2 and recs[0].n_samples == 128 * 5
    assert np.array_equal(recs[1].samples, data[1, :, 384:])
    assert recs[1].label == VadRating(9.0, 1.0, 4.0)
    np.savez(tmp_path / "s02.npz", data=data, labels=labels * 2, channels=chans, fs=128.0)
    with pytest.raises(DomainError, match="s02"):
        import_matrix_dataset(tmp_path)


def test_import_empty_directory(tmp_path):
    with pytest.raises(DomainError):
        import_matrix_dataset(tmp_path)
