"""Automatic clip annotation from face detections and audio VAD.

Per video: split into shots, suppress overlapping detections, link them into
tracks by center distance, smooth each track with a Kalman/RTS smoother,
square the boxes, then label fixed-length windows:

* speech and exactly one face -> ``speaking``
* no speech -> every face ``silent``
* anything else -> discarded
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .audio import coverage
from .errors import TooShortTrack, ValidationError

SPEAKING = "speaking"
SILENT = "silent"
# Coverage is computed in seconds; absorb rounding so frame-aligned VAD hits
# the thresholds exactly.
COVERAGE_EPS = 1e-9


@dataclass
class PipelineConfig:
    clip_len: int = 50
    speech_cov: float = 0.9
    fps: float = 25.0
    iou_threshold: float = 0.45
    dist_threshold: float | None = None  # None: half the mean previous box side
    process_noise: float = 1.0
    measurement_noise: float = 9.0
    single_face_silent: bool = False

    def validate(self):
        if self.clip_len < 1:
            raise ValidationError("clip_len must be >= 1")
        if not 0.5 < self.speech_cov <= 1.0:
            raise ValidationError("speech_cov must lie in (0.5, 1]")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if not 0 < self.iou_threshold < 1:
            raise ValidationError("iou_threshold must lie in (0, 1)")
        if self.dist_threshold is not None and self.dist_threshold <= 0:
            raise ValidationError("dist_threshold must be positive")


@dataclass
class DetectionFrame:
    frame_idx: int
    boxes: list  # (x, y, w, h, score)

    def __post_init__(self):
        if self.frame_idx < 0:
            raise ValidationError("frame_idx must be non-negative")
        for b in self.boxes:
            if len(b) != 5 or b[2] <= 0 or b[3] <= 0:
                raise ValidationError(f"frame {self.frame_idx}: invalid box {b}")


@dataclass
class Track:
    track_id: int
    boxes: dict = field(default_factory=dict)  # frame_idx -> (x, y, w, h)
    smoothed: dict | None = None

    @property
    def first(self):
        return min(self.boxes)

    @property
    def last(self):
        return max(self.boxes)

    def __len__(self):
        return len(self.boxes)

    def alive(self, frame):
        return frame in self.boxes

    def center(self, frame):
        x, y, w, h = self.boxes[frame]
        return x + w / 2, y + h / 2


@dataclass
class LabeledClip:
    source_id: str
    track_id: int
    start: int
    end: int
    label: str
    boxes: list
    provenance: str = "auto"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        rec = {
            "source_id": self.source_id,
            "track_id": self.track_id,
            "start": self.start,
            "end": self.end,
            "label": self.label,
            "boxes": self.boxes,
            "provenance": self.provenance,
        }
        rec.update(self.extra)
        return rec

    @classmethod
    def from_dict(cls, rec):
        known = {"source_id", "track_id", "start", "end", "label", "boxes", "provenance"}
        return cls(
            source_id=str(rec["source_id"]),
            track_id=int(rec["track_id"]),
            start=int(rec["start"]),
            end=int(rec["end"]),
            label=rec["label"],
            boxes=rec.get("boxes", []),
            provenance=rec.get("provenance", "auto"),
            extra={k: v for k, v in rec.items() if k not in known},
        )


# shots


def frame_differences(frames):
    """Mean absolute difference between consecutive uint8 frames, scaled to [0, 1]."""
    frames = np.asarray(frames, dtype=np.float64)
    axes = tuple(range(1, frames.ndim))
    return np.abs(np.diff(frames, axis=0)).mean(axis=axes) / 255.0


def shot_split(frame_diffs, threshold):
    """Boundary at ``i + 1`` for every ``frame_diffs[i] > threshold``."""
    return [i + 1 for i, d in enumerate(frame_diffs) if d > threshold]


def shot_ranges(boundaries, n_frames):
    edges = [0] + [b for b in boundaries if 0 < b < n_frames] + [n_frames]
    if any(b <= a for a, b in zip(edges[1:-1], edges[2:-1])):
        raise ValidationError("shot boundaries must be strictly increasing")
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# detections


def iou(a, b):
    ax2, ay2 = a[0] + a[2], a[1] + a[3]
    bx2, by2 = b[0] + b[2], b[1] + b[3]
    iw = max(0.0, min(ax2, bx2) - max(a[0], b[0]))
    ih = max(0.0, min(ay2, by2) - max(a[1], b[1]))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def nms(boxes, iou_threshold=0.45):
    """Greedy non-maximum suppression; survivors sorted by descending score.

    Equal scores keep their input order.
    """
    order = sorted(range(len(boxes)), key=lambda i: -boxes[i][4])
    keep = []
    while order:
        best = order.pop(0)
        keep.append(boxes[best])
        order = [i for i in order if iou(boxes[best], boxes[i]) <= iou_threshold]
    return keep


class Association(NamedTuple):
    live: list
    finished: list
    next_id: int


def default_dist_threshold(tracks):
    sides = [max(t.boxes[t.last][2:4]) for t in tracks]
    return 0.5 * float(np.mean(sides)) if sides else math.inf


def associate(prev_tracks, detections, dist_threshold=None, next_id=0):
    """Extend live tracks with the boxes of ``detections`` by center distance.

    Pairs are taken greedily in order of increasing distance while both ends
    are free and the distance is within ``dist_threshold``. Leftover
    detections open new tracks; leftover tracks are finished.
    """
    if dist_threshold is None:
        dist_threshold = default_dist_threshold(prev_tracks)
    elif dist_threshold <= 0:
        raise ValidationError("dist_threshold must be positive")
    frame = detections.frame_idx
    det_centers = [(b[0] + b[2] / 2, b[1] + b[3] / 2) for b in detections.boxes]

    pairs = []
    for ti, track in enumerate(prev_tracks):
        cx, cy = track.center(track.last)
        for di, (dx, dy) in enumerate(det_centers):
            pairs.append((math.hypot(cx - dx, cy - dy), ti, di))
    pairs.sort()

    used_t, used_d = set(), set()
    for dist, ti, di in pairs:
        if dist > dist_threshold:
            break
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        prev_tracks[ti].boxes[frame] = tuple(float(v) for v in detections.boxes[di][:4])

    live = [t for i, t in enumerate(prev_tracks) if i in used_t]
    finished = [t for i, t in enumerate(prev_tracks) if i not in used_t]
    for di, box in enumerate(detections.boxes):
        if di not in used_d:
            live.append(Track(next_id, {frame: tuple(float(v) for v in box[:4])}))
            next_id += 1
    return Association(live, finished, next_id)


def build_tracks(detection_frames, start, end, cfg, next_id=0):
    """Track faces over frames ``[start, end)``; frames without detections end all tracks."""
    by_frame = {d.frame_idx: d for d in detection_frames if start <= d.frame_idx < end}
    live, done = [], []
    for f in range(start, end):
        det = by_frame.get(f, DetectionFrame(f, []))
        det = DetectionFrame(f, nms(det.boxes, cfg.iou_threshold))
        live, finished, next_id = associate(live, det, cfg.dist_threshold, next_id)
        done.extend(finished)
    done.extend(live)
    done.sort(key=lambda t: t.track_id)
    return done, next_id


# smoothing


def _rts_1d(z, q, r):
    """Constant-velocity Kalman filter followed by a Rauch-Tung-Striebel pass.

    The prior is centered on the first two measurements, so noiseless constant
    and linear inputs pass through unchanged.
    """
    n = len(z)
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    Q = q * np.array([[1 / 3, 1 / 2], [1 / 2, 1.0]])
    x = np.array([z[0], z[1] - z[0]])
    P = np.diag([r, 2 * r])

    xs_pred = np.empty((n, 2))
    Ps_pred = np.empty((n, 2, 2))
    xs = np.empty((n, 2))
    Ps = np.empty((n, 2, 2))
    for k in range(n):
        if k > 0:
            x = F @ x
            P = F @ P @ F.T + Q
        xs_pred[k], Ps_pred[k] = x, P
        s = P[0, 0] + r
        K = P[:, 0] / s
        x = x + K * (z[k] - x[0])
        P = P - np.outer(K, P[0, :])
        xs[k], Ps[k] = x, P

    out = xs.copy()
    for k in range(n - 2, -1, -1):
        G = Ps[k] @ F.T @ np.linalg.inv(Ps_pred[k + 1])
        out[k] = xs[k] + G @ (out[k + 1] - xs_pred[k + 1])
    return out[:, 0]


def kalman_smooth(track, process_noise=1.0, measurement_noise=9.0):
    """Smooth center and scale (``max(w, h)``) of a track; aspect ratio is kept."""
    if len(track) < 2:
        raise TooShortTrack(f"track {track.track_id} has {len(track)} frame(s)")
    frames = sorted(track.boxes)
    raw = np.array([track.boxes[f] for f in frames], dtype=np.float64)
    cx = raw[:, 0] + raw[:, 2] / 2
    cy = raw[:, 1] + raw[:, 3] / 2
    s = raw[:, 2:4].max(axis=1)
    scx = _rts_1d(cx, process_noise, measurement_noise)
    scy = _rts_1d(cy, process_noise, measurement_noise)
    ss = _rts_1d(s, process_noise, measurement_noise)
    w = raw[:, 2] * ss / s
    h = raw[:, 3] * ss / s
    smoothed = {
        f: (float(scx[i] - w[i] / 2), float(scy[i] - h[i] / 2), float(w[i]), float(h[i]))
        for i, f in enumerate(frames)
    }
    return Track(track.track_id, dict(track.boxes), smoothed)


# squares and padding


@dataclass(frozen=True)
class CropBox:
    frame_idx: int
    x: int
    y: int
    side: int
    pad_left: int = 0
    pad_top: int = 0
    pad_right: int = 0
    pad_bottom: int = 0


def square_boxes(track):
    """Equal-sized squares (largest side over the track) around each frame's center."""
    boxes = track.smoothed if track.smoothed is not None else track.boxes
    side = int(round(max(max(b[2], b[3]) for b in boxes.values())))
    out = {}
    for f, (x, y, w, h) in boxes.items():
        cx, cy = x + w / 2, y + h / 2
        out[f] = (int(round(cx - side / 2)), int(round(cy - side / 2)), side)
    return out


def pad_boxes(track, image_w, image_h):
    """Square crop boxes plus the replicate padding each needs to stay in-image."""
    crops = []
    for f, (x, y, side) in sorted(square_boxes(track).items()):
        crops.append(CropBox(
            f, x, y, side,
            pad_left=max(0, -x),
            pad_top=max(0, -y),
            pad_right=max(0, x + side - image_w),
            pad_bottom=max(0, y + side - image_h),
        ))
    return crops


def crop(image, box):
    """Cut ``box`` out of ``image``, replicating edge pixels where it leaves the frame."""
    image = np.asarray(image)
    pads = [(box.pad_top, box.pad_bottom), (box.pad_left, box.pad_right)]
    pads += [(0, 0)] * (image.ndim - 2)
    padded = np.pad(image, pads, mode="edge")
    y0 = box.y + box.pad_top
    x0 = box.x + box.pad_left
    return padded[y0:y0 + box.side, x0:x0 + box.side]


# labeling


def label_clips(tracks, vad, shots, cfg, n_frames=None, source_id="video"):
    """Label non-overlapping ``cfg.clip_len`` windows tiling each shot."""
    cfg.validate()
    if n_frames is None:
        n_frames = max((t.last + 1 for t in tracks), default=0)
    squares = {t.track_id: square_boxes(t) for t in tracks}
    clips = []
    for s0, s1 in shot_ranges(shots, n_frames):
        for a in range(s0, s1 - cfg.clip_len + 1, cfg.clip_len):
            b = a + cfg.clip_len
            present = [t for t in tracks if any(t.alive(f) for f in range(a, b))]
            full = [t for t in present if all(t.alive(f) for f in range(a, b))]
            if not full:
                continue
            cov = coverage(vad, a / cfg.fps, b / cfg.fps)
            if cov >= cfg.speech_cov - COVERAGE_EPS:
                if len(present) == 1 and len(full) == 1:
                    labeled = [(full[0], SPEAKING)]
                else:
                    labeled = []
            elif cov <= 1 - cfg.speech_cov + COVERAGE_EPS:
                if cfg.single_face_silent and len(present) != 1:
                    labeled = []
                else:
                    labeled = [(t, SILENT) for t in full]
            else:
                labeled = []
            for t, label in labeled:
                sq = squares[t.track_id]
                boxes = [[sq[f][0], sq[f][1], sq[f][2], sq[f][2]] for f in range(a, b)]
                clips.append(LabeledClip(source_id, t.track_id, a, b, label, boxes))
    return clips


def run_pipeline(detection_frames, vad, shots, n_frames, cfg=None, source_id="video"):
    """Full per-video pipeline; tracks never cross shot boundaries."""
    cfg = cfg or PipelineConfig()
    cfg.validate()
    tracks = []
    next_id = 0
    for s0, s1 in shot_ranges(shots, n_frames):
        shot_tracks, next_id = build_tracks(detection_frames, s0, s1, cfg, next_id)
        tracks.extend(shot_tracks)
    smoothed = [
        kalman_smooth(t, cfg.process_noise, cfg.measurement_noise) if len(t) >= 2 else t
        for t in tracks
    ]
    return label_clips(smoothed, vad, shots, cfg, n_frames=n_frames, source_id=source_id), smoothed


def read_detections(records):
    """Group detection-manifest records into ``{video_id: [DetectionFrame, ...]}``."""
    videos = {}
    for rec in records:
        frame = DetectionFrame(int(rec["frame_idx"]), [tuple(float(v) for v in b) for b in rec["boxes"]])
        videos.setdefault(str(rec["video_id"]), []).append(frame)
    for frames in videos.values():
        frames.sort(key=lambda d: d.frame_idx)
    return videos
