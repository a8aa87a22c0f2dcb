"""Audio voice-activity segments: ingestion, a built-in energy detector, coverage.

Any external detector (e.g. WebRTC) plugs in by producing
:class:`AudioVadSegment` lists, usually via :func:`read_segments`. Objects
with a ``segments(video_id)`` method (see :class:`VadProvider`) can be handed
to the pipeline interchangeably.
"""

import wave
from pathlib import Path
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import EmptyAudio, ValidationError
from .io import read_jsonl, write_jsonl

DEFAULT_THRESHOLD_DB = 12.0
DEFAULT_HANGOVER = 5
DEFAULT_WINDOW_S = 0.030
# Cap on the percentile reference so steady loud signals are not normalized away.
NOISE_FLOOR_DBFS = -50.0
_SILENCE_DB = -200.0


@dataclass(frozen=True)
class AudioVadSegment:
    start_s: float
    end_s: float
    speech: bool

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise ValidationError(f"invalid segment [{self.start_s}, {self.end_s})")

    def to_dict(self):
        return {"start_s": self.start_s, "end_s": self.end_s, "speech": self.speech}


@dataclass(frozen=True)
class AudioWindow:
    samples: np.ndarray
    sample_rate: float

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def frame_audio(samples, sample_rate, window_s=DEFAULT_WINDOW_S):
    """Split a signal into consecutive equal windows; a short tail is dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    n = int(round(window_s * sample_rate))
    if n <= 0:
        raise ValidationError("window shorter than one sample")
    count = len(samples) // n
    return [AudioWindow(samples[i * n:(i + 1) * n], sample_rate) for i in range(count)]


def window_energy_db(windows):
    rms = np.array([np.sqrt(np.mean(np.square(w.samples))) for w in windows])
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(rms)
    return np.maximum(db, _SILENCE_DB)


def energy_vad(windows, threshold_db=DEFAULT_THRESHOLD_DB, hangover_windows=DEFAULT_HANGOVER):
    """Energy-threshold detector with hangover.

    A window is active when its RMS level exceeds the reference level by
    ``threshold_db``. The reference is the recording's 10th-percentile window
    level, capped at ``NOISE_FLOOR_DBFS`` (samples are full scale at 1.0).
    Activity is held for ``hangover_windows`` windows after the last active
    one, then runs of equal state are merged into segments.
    """
    windows = list(windows)
    if not windows or any(len(w.samples) == 0 for w in windows):
        raise EmptyAudio("no audio windows")
    sizes = {len(w.samples) for w in windows}
    rates = {w.sample_rate for w in windows}
    if len(sizes) != 1 or len(rates) != 1:
        raise ValidationError("audio windows must be uniform in length and sample rate")
    if hangover_windows < 0:
        raise ValidationError("hangover_windows must be non-negative")

    db = window_energy_db(windows)
    reference = min(float(np.percentile(db, 10)), NOISE_FLOOR_DBFS)
    hot = db > reference + threshold_db

    state = np.zeros(len(hot), dtype=bool)
    since = None
    for i, h in enumerate(hot):
        if h:
            since = 0
        elif since is not None:
            since += 1
        state[i] = since is not None and since <= hangover_windows

    return merge_states(state, windows[0].duration)


def merge_states(state, window_s):
    segments = []
    start = 0
    for i in range(1, len(state) + 1):
        if i == len(state) or state[i] != state[start]:
            segments.append(AudioVadSegment(start * window_s, i * window_s, bool(state[start])))
            start = i
    return segments


def coverage(segments, start_s, end_s):
    """Fraction of ``[start_s, end_s)`` covered by speech segments."""
    if not start_s < end_s:
        raise ValidationError("coverage needs start_s < end_s")
    spans = sorted((max(s.start_s, start_s), min(s.end_s, end_s)) for s in segments if s.speech)
    covered = 0.0
    cur_lo = cur_hi = None
    for lo, hi in spans:
        if hi <= lo:
            continue
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                covered += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        covered += cur_hi - cur_lo
    return min(1.0, covered / (end_s - start_s))


def validate_segments(segments):
    for a, b in zip(segments, segments[1:]):
        if b.start_s < a.end_s:
            raise ValidationError(f"segments overlap or are unsorted at t={b.start_s}")
    return segments


def read_segments(path, video_id=None):
    """Load JSON-lines ``{start_s, end_s, speech}`` records.

    Records may carry an optional ``video_id``; when ``video_id`` is given only
    matching (or untagged) records are kept.
    """
    segs = []
    for rec in read_jsonl(path):
        if video_id is not None and rec.get("video_id", video_id) != video_id:
            continue
        segs.append(AudioVadSegment(float(rec["start_s"]), float(rec["end_s"]), bool(rec["speech"])))
    segs.sort(key=lambda s: s.start_s)
    return validate_segments(segs)


def write_segments(path, segments):
    write_jsonl(path, [s.to_dict() for s in segments])


def read_wav(path):
    """Uncompressed PCM WAV to a mono float signal in [-1, 1] and its sample rate."""
    with wave.open(str(path), "rb") as wf:
        if wf.getcomptype() != "NONE":
            raise ValidationError("only uncompressed PCM WAV is supported")
        width = wf.getsampwidth()
        rate = wf.getframerate()
        channels = wf.getnchannels()
        raw = wf.readframes(wf.getnframes())
    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128) / 128
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768
    elif width == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2 ** 31
    else:
        raise ValidationError(f"unsupported sample width {width}")
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return data, rate


class VadProvider(Protocol):
    def segments(self, video_id): ...


class SegmentFileProvider:
    """Segments from a JSON-lines file, optionally tagged per video."""

    def __init__(self, path):
        self.path = path

    def segments(self, video_id):
        return read_segments(self.path, video_id=video_id)


class EnergyVadProvider:
    """Runs :func:`energy_vad` on ``<root>/<video_id>.wav``."""

    def __init__(self, root, threshold_db=DEFAULT_THRESHOLD_DB, hangover_windows=DEFAULT_HANGOVER,
                 window_s=DEFAULT_WINDOW_S):
        self.root = root
        self.threshold_db = threshold_db
        self.hangover_windows = hangover_windows
        self.window_s = window_s

    def segments(self, video_id):
        samples, rate = read_wav(Path(self.root) / f"{video_id}.wav")
        windows = frame_audio(samples, rate, self.window_s)
        return energy_vad(windows, self.threshold_db, self.hangover_windows)
