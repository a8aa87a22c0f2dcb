import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vvad.audio import (
    AudioVadSegment,
    AudioWindow,
    EnergyVadProvider,
    SegmentFileProvider,
    coverage,
    energy_vad,
    frame_audio,
    read_segments,
    read_wav,
    write_segments,
)
from vvad.errors import EmptyAudio, ValidationError

SR = 16000


def tone(seconds, amp=1.0, freq=440.0):
    t = np.arange(int(seconds * SR)) / SR
    return amp * np.sin(2 * np.pi * freq * t)


def silence(seconds):
    return np.zeros(int(seconds * SR))


def test_all_zero_is_one_silent_segment():
    segs = energy_vad(frame_audio(silence(1.0), SR))
    assert len(segs) == 1 and not segs[0].speech
    assert segs[0].start_s == 0.0


def test_full_scale_tone_is_one_speech_segment():
    segs = energy_vad(frame_audio(tone(1.0), SR), threshold_db=6)
    assert len(segs) == 1 and segs[0].speech


def test_hangover_bridges_short_gap():
    # 0.09 s gap = 3 windows of 30 ms, inside the 5-window hangover
    sig = np.concatenate([silence(0.3), tone(0.3), silence(0.09), tone(0.3), silence(0.6)])
    segs = energy_vad(frame_audio(sig, SR), hangover_windows=5)
    speech = [s for s in segs if s.speech]
    assert len(speech) == 1
    # hand trace: onset at window 10, last hot window 32, held 5 more
    assert speech[0].start_s == pytest.approx(10 * 0.03)
    assert speech[0].end_s == pytest.approx(38 * 0.03)


def test_long_gap_splits_segments():
    sig = np.concatenate([silence(0.3), tone(0.3), silence(0.6), tone(0.3), silence(0.3)])
    segs = energy_vad(frame_audio(sig, SR), hangover_windows=5)
    assert sum(s.speech for s in segs) == 2


def test_zero_hangover_tracks_energy_exactly():
    sig = np.concatenate([silence(0.3), tone(0.03), silence(0.3)])
    segs = energy_vad(frame_audio(sig, SR), hangover_windows=0)
    assert [(round(s.start_s, 6), round(s.end_s, 6), s.speech) for s in segs] == [
        (0.0, 0.3, False), (0.3, 0.33, True), (0.33, 0.63, False)]


def test_segments_partition_and_alternate():
    rng = np.random.default_rng(0)
    sig = np.concatenate([tone(rng.uniform(0.05, 0.4), amp=rng.uniform(0, 1) > 0.5) for _ in range(12)])
    windows = frame_audio(sig, SR)
    segs = energy_vad(windows)
    assert segs[0].start_s == 0.0
    assert segs[-1].end_s == pytest.approx(len(windows) * 0.03)
    for a, b in zip(segs, segs[1:]):
        assert a.end_s == pytest.approx(b.start_s)
        assert a.speech != b.speech


def test_energy_vad_errors():
    with pytest.raises(EmptyAudio):
        energy_vad([])
    with pytest.raises(ValidationError):
        energy_vad([AudioWindow(np.zeros(10), SR), AudioWindow(np.zeros(11), SR)])


def test_segment_invariants():
    with pytest.raises(ValidationError):
        AudioVadSegment(1.0, 1.0, True)
    with pytest.raises(ValidationError):
        AudioVadSegment(-0.1, 1.0, True)


def test_coverage_examples():
    assert coverage([], 0, 2) == 0.0
    assert coverage([AudioVadSegment(0, 5, True)], 1, 2) == 1.0
    assert coverage([AudioVadSegment(0, 1, True)], 0, 2) == 0.5
    assert coverage([AudioVadSegment(0, 1, False)], 0, 1) == 0.0
    with pytest.raises(ValidationError):
        coverage([], 2, 2)


segments_st = st.lists(
    st.tuples(st.floats(0, 10), st.floats(0.01, 3), st.booleans()), max_size=8
).map(lambda xs: [AudioVadSegment(a, a + d, s) for a, d, s in xs])


@given(segments_st, st.floats(0, 10), st.floats(0.01, 5), st.floats(0, 10), st.floats(0.01, 3))
def test_coverage_monotone_in_added_speech(segs, lo, width, extra_start, extra_len):
    before = coverage(segs, lo, lo + width)
    after = coverage(segs + [AudioVadSegment(extra_start, extra_start + extra_len, True)], lo, lo + width)
    assert 0.0 <= before <= after + 1e-12 <= 1.0 + 1e-12


@given(st.floats(0, 5), st.floats(0.1, 5), st.integers(2, 6), st.floats(0, 8), st.floats(0.1, 4))
def test_coverage_invariant_to_subdivision(start, length, parts, lo, width):
    whole = [AudioVadSegment(start, start + length, True)]
    edges = np.linspace(start, start + length, parts + 1)
    split = [AudioVadSegment(a, b, True) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    assert coverage(split, lo, lo + width) == pytest.approx(coverage(whole, lo, lo + width), abs=1e-9)


def test_segment_file_roundtrip(tmp_path):
    segs = [AudioVadSegment(0.0, 1.5, True), AudioVadSegment(1.5, 3.0, False)]
    path = tmp_path / "vad.jsonl"
    write_segments(path, segs)
    assert read_segments(path) == segs
    assert SegmentFileProvider(path).segments("any") == segs


def test_read_segments_filters_by_video(tmp_path):
    path = tmp_path / "vad.jsonl"
    path.write_text(
        '{"video_id": "a", "start_s": 0, "end_s": 1, "speech": true}\n'
        '{"video_id": "b", "start_s": 0, "end_s": 2, "speech": false}\n'
    )
    assert read_segments(path, video_id="b") == [AudioVadSegment(0, 2, False)]


def test_read_segments_rejects_overlap(tmp_path):
    path = tmp_path / "vad.jsonl"
    path.write_text('{"start_s": 0, "end_s": 2, "speech": true}\n{"start_s": 1, "end_s": 3, "speech": false}\n')
    with pytest.raises(ValidationError):
        read_segments(path)


def test_wav_energy_provider(tmp_path):
    sig = np.concatenate([silence(0.6), tone(0.6, amp=0.5), silence(0.6)])
    with wave.open(str(tmp_path / "clip.wav"), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SR)
        wf.writeframes((sig * 32767).astype("<i2").tobytes())
    data, rate = read_wav(tmp_path / "clip.wav")
    assert rate == SR and len(data) == len(sig)
    segs = EnergyVadProvider(tmp_path).segments("clip")
    speech = [s for s in segs if s.speech]
    assert len(speech) == 1
    assert speech[0].start_s == pytest.approx(0.6, abs=0.03)
