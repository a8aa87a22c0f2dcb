"""Synthetic talking/silent landmark clips and annotation-noise injection.

Speaking clips open and close the mouth sinusoidally; silent clips are the
same face without the oscillation. Both can carry a smooth random head
trajectory and per-landmark jitter, so the only label-bearing signal is
mouth-local motion.
"""

from dataclasses import dataclass, field

import numpy as np

from .landmarks import N_POINTS, axis_angle_to_matrix

SPEAKING = 1
SILENT = 0

INNER_UPPER = [61, 62, 63]
INNER_LOWER = [65, 66, 67]
OUTER_UPPER = [49, 50, 51, 52, 53]
OUTER_LOWER = [55, 56, 57, 58, 59]

# iBUG-68 left/right correspondences; points absent here lie on the midline.
MIRROR_PAIRS = (
    [(i, 16 - i) for i in range(8)]
    + [(17, 26), (18, 25), (19, 24), (20, 23), (21, 22)]
    + [(31, 35), (32, 34)]
    + [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]
    + [(48, 54), (49, 53), (50, 52), (59, 55), (58, 56)]
    + [(60, 64), (61, 63), (67, 65)]
)

MAX_HEAD_ANGLE = np.deg2rad(30.0)


def _left_half_and_midline():
    """Hand-placed frontal landmarks (inter-ocular units, y down, +z toward camera)."""
    pts = {}
    for k in range(8):
        t = k / 8 * np.pi / 2
        pts[k] = (-0.78 * np.cos(t), -0.12 + 1.02 * np.sin(t), -0.55 * np.cos(t))
    for j, idx in enumerate(range(17, 22)):
        pts[idx] = (-0.62 + 0.12 * j, -0.40 - 0.06 * np.sin(np.pi * j / 4), 0.10 + 0.04 * j)
    for j, idx in enumerate(range(27, 31)):
        pts[idx] = (0.0, -0.26 + 0.12 * j, 0.20 + 0.075 * j)
    pts[31] = (-0.15, 0.20, 0.22)
    pts[32] = (-0.08, 0.23, 0.27)
    pts[33] = (0.0, 0.25, 0.30)
    pts[36] = (-0.50, -0.20, 0.04)
    pts[37] = (-0.41, -0.25, 0.08)
    pts[38] = (-0.29, -0.25, 0.10)
    pts[39] = (-0.19, -0.20, 0.11)
    pts[40] = (-0.29, -0.16, 0.10)
    pts[41] = (-0.41, -0.16, 0.08)
    pts[48] = (-0.30, 0.50, 0.20)
    pts[49] = (-0.20, 0.44, 0.27)
    pts[50] = (-0.08, 0.41, 0.31)
    pts[51] = (0.0, 0.42, 0.32)
    pts[57] = (0.0, 0.62, 0.30)
    pts[58] = (-0.10, 0.61, 0.28)
    pts[59] = (-0.20, 0.58, 0.25)
    pts[60] = (-0.24, 0.50, 0.23)
    pts[61] = (-0.08, 0.47, 0.28)
    pts[62] = (0.0, 0.47, 0.29)
    pts[66] = (0.0, 0.53, 0.28)
    pts[67] = (-0.08, 0.53, 0.27)
    pts[8] = (0.0, 0.90, 0.05)
    return pts


def neutral_face():
    """Bilaterally symmetric 68-point frontal face with unit eye-corner distance."""
    pts = _left_half_and_midline()
    face = np.full((N_POINTS, 3), np.nan)
    for idx, p in pts.items():
        face[idx] = p
    for left, right in MIRROR_PAIRS:
        face[right] = face[left] * np.array([-1.0, 1.0, 1.0])
    assert not np.isnan(face).any()
    return face


def build_mean_face():
    """Template shipped as ``mean_face_v1.csv``: the neutral face, centroid at the origin.

    With a single symmetric source shape the Procrustes mean reduces to the
    shape itself; centering keeps the ``x = 0`` symmetry plane.
    """
    face = neutral_face()
    face = face - face.mean(axis=0)
    iod = np.linalg.norm(face[45] - face[36])
    return face / iod


def mouth_opening(seq):
    """Inner-lip gap (points 62 to 66) divided by eye-corner distance, per frame."""
    seq = np.asarray(seq, dtype=np.float64)
    gap = np.linalg.norm(seq[:, 66] - seq[:, 62], axis=1)
    iod = np.linalg.norm(seq[:, 45] - seq[:, 36], axis=1)
    return gap / iod


@dataclass
class SynthConfig:
    n_clips: int = 2000
    clip_len: int = 50
    frame_rate: float = 25.0
    speak_amp: float = 0.15
    speak_freq: float = 4.0
    head_motion: str = "rigid"
    noise_sigma: float = 0.02
    seed: int = 0
    iod_px: tuple = (40.0, 120.0)

    def validate(self):
        if self.n_clips <= 0 or self.n_clips % 2:
            raise ValueError("n_clips must be a positive even number")
        if self.clip_len < 2:
            raise ValueError("clip_len must be at least 2")
        if self.speak_amp < 0 or self.noise_sigma < 0:
            raise ValueError("amplitudes must be non-negative")
        if self.head_motion not in ("none", "rigid"):
            raise ValueError("head_motion must be 'none' or 'rigid'")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")


@dataclass
class SyntheticClip:
    clip_id: str
    landmarks: np.ndarray
    label: int
    frame_rate: float
    geometry: np.ndarray | None = None  # same clip without landmark jitter
    meta: dict = field(default_factory=dict)


def _head_trajectory(rng, n, dt):
    """Integrated Ornstein-Uhlenbeck angular velocities, angles capped at +/-30 degrees."""
    theta, sigma = 1.5, 0.6
    angles = np.empty((n, 3))
    angle = rng.uniform(-0.25, 0.25, size=3)
    omega = rng.normal(scale=sigma / np.sqrt(2 * theta), size=3)
    vel_px = rng.normal(scale=0.5, size=2)
    shift = np.zeros((n, 2))
    pos = np.zeros(2)
    for i in range(n):
        angles[i] = angle
        shift[i] = pos
        omega += -theta * omega * dt + sigma * np.sqrt(dt) * rng.normal(size=3)
        angle = np.clip(angle + omega * dt, -MAX_HEAD_ANGLE, MAX_HEAD_ANGLE)
        vel_px += -theta * vel_px * dt + 2.0 * np.sqrt(dt) * rng.normal(size=2)
        pos = pos + vel_px
    return angles, shift


def _euler(angles):
    yaw, pitch, roll = angles
    return (
        axis_angle_to_matrix([0.0, yaw, 0.0])
        @ axis_angle_to_matrix([pitch, 0.0, 0.0])
        @ axis_angle_to_matrix([0.0, 0.0, roll])
    )


def synthesize_clip(cfg, index, label, face=None):
    rng = np.random.default_rng([cfg.seed, index])
    face = build_mean_face() if face is None else face
    n = cfg.clip_len
    dt = 1.0 / cfg.frame_rate
    t = np.arange(n) * dt

    opening = np.zeros(n)
    freq = cfg.speak_freq * rng.uniform(0.75, 1.25)
    phase = rng.uniform(0, 2 * np.pi)
    if label == SPEAKING:
        opening = cfg.speak_amp * 0.5 * (1 - np.cos(2 * np.pi * freq * t + phase))

    pts = np.repeat(face[None], n, axis=0)
    pts[:, INNER_UPPER, 1] -= opening[:, None] / 2
    pts[:, INNER_LOWER, 1] += opening[:, None] / 2
    pts[:, OUTER_UPPER, 1] -= opening[:, None] / 4
    pts[:, OUTER_LOWER, 1] += opening[:, None] / 4
    jitter = rng.normal(scale=cfg.noise_sigma, size=pts.shape) if cfg.noise_sigma > 0 else 0.0

    scale = rng.uniform(*cfg.iod_px)
    center = np.array([rng.uniform(200, 440), rng.uniform(160, 320)])
    if cfg.head_motion == "rigid":
        angles, shift = _head_trajectory(rng, n, dt)
    else:
        angles, shift = np.zeros((n, 3)), np.zeros((n, 2))

    def place(frames):
        out = np.empty_like(frames)
        for i in range(n):
            out[i] = frames[i] @ _euler(angles[i]).T * scale
            out[i, :, :2] += center + shift[i]
        return out

    meta = {"freq": float(freq), "phase": float(phase), "iod_px": float(scale)}
    return SyntheticClip(f"synth-{cfg.seed}-{index:05d}", place(pts + jitter), int(label),
                         cfg.frame_rate, place(pts), meta)


def generate(cfg):
    """Balanced clip set; even indices speak, odd indices stay silent."""
    cfg.validate()
    face = build_mean_face()
    return [
        synthesize_clip(cfg, i, SPEAKING if i % 2 == 0 else SILENT, face)
        for i in range(cfg.n_clips)
    ]


@dataclass(frozen=True)
class NoiseSpec:
    flip_speaking: float = 0.12
    flip_silent: float = 0.086
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_speaking", "flip_silent"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 0.5:
                raise ValueError(f"{name}={rate} must lie in [0, 0.5)")


def inject_label_noise(labels, spec):
    """Flip each label independently at its class rate.

    Returns ``(noisy_labels, flip_mask)``; XOR-ing the mask back restores the
    original labels.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    u = rng.random(len(labels))
    rate = np.where(labels == SPEAKING, spec.flip_speaking, spec.flip_silent)
    mask = u < rate
    return apply_flip_mask(labels, mask), mask


def apply_flip_mask(labels, mask):
    labels = np.asarray(labels, dtype=np.int64)
    return np.where(mask, 1 - labels, labels)


def render_frames(landmarks, size=48, blob_sigma=1.2, margin=1.25):
    """Draw landmarks as Gaussian blobs inside a square crop that follows the face.

    The crop side is fixed over the clip (largest face extent times ``margin``)
    and centered on each frame's landmark box, mimicking the padded face crops
    produced by the annotation pipeline. Returns ``(T, size, size)`` uint8.
    """
    landmarks = np.asarray(landmarks, dtype=np.float64)
    xy = landmarks[..., :2]
    lo, hi = xy.min(axis=1), xy.max(axis=1)
    side = (hi - lo).max() * margin
    centers = (lo + hi) / 2
    grid = (np.arange(size) + 0.5) / size
    frames = np.empty((len(landmarks), size, size), dtype=np.uint8)
    for i in range(len(landmarks)):
        p = (xy[i] - centers[i]) / side + 0.5
        px = p[:, 0] * size
        py = p[:, 1] * size
        gx = np.exp(-((grid * size)[None, :] - px[:, None]) ** 2 / (2 * blob_sigma ** 2))
        gy = np.exp(-((grid * size)[None, :] - py[:, None]) ** 2 / (2 * blob_sigma ** 2))
        img = np.clip(np.einsum("ky,kx->yx", gy, gx), 0, 1)
        frames[i] = np.round(255 * img).astype(np.uint8)
    return frames


def flow_clip(landmarks, size=48, flow_cfg=None):
    """Render a landmark clip and encode the flow between consecutive frames as RGB.

    Pass the jitter-free ``geometry`` of a clip: the jitter models landmark
    detector error, which real pixels do not show. Returns ``(T - 1, size,
    size, 3)`` uint8.
    """
    from .flow import FlowConfig, dense_flow, flow_to_rgb

    # Smaller window than the default suits 48 px renders.
    flow_cfg = flow_cfg or FlowConfig(levels=2, window=9)
    frames = render_frames(landmarks, size=size)
    return np.stack([
        flow_to_rgb(dense_flow(a, b, flow_cfg)) for a, b in zip(frames[:-1], frames[1:])
    ])
