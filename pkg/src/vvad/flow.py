"""Dense optical flow between face crops and its color-wheel RGB encoding.

Colors use the 55-entry Middlebury wheel (RY 15, YG 6, GC 4, CB 11, BM 13,
MR 6). The wheel position of a vector is
``(atan2(-v, -u) + pi) / (2 pi) * 55`` taken modulo 55, linearly
interpolated between neighbouring entries; saturation is
``min(|flow| / max_mag, 1)`` and blends the wheel color toward white, so zero
flow is white. Channels are ``floor(255 * c)``.
"""

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import ShapeMismatch

N_WHEEL = 55


@dataclass(frozen=True)
class FlowConfig:
    levels: int = 3
    window: int = 15
    iterations: int = 3
    pyr_scale: float = 0.5
    poly_n: int = 5
    poly_sigma: float = 1.1


@dataclass
class FlowFrame:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape:
            raise ShapeMismatch("u and v differ in shape")

    @property
    def magnitude(self):
        return np.hypot(self.u, self.v)


def _to_gray_u8(img):
    img = np.asarray(img)
    if img.ndim == 3:
        img = cv2.cvtColor(img.astype(np.uint8), cv2.COLOR_RGB2GRAY)
    if img.dtype != np.uint8:
        img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return img


def dense_flow(frame_a, frame_b, cfg=None):
    """Farneback polynomial-expansion flow from ``frame_a`` to ``frame_b``.

    ``frame_b(x + u, y + v) ~ frame_a(x, y)``, so content moving right gives
    positive ``u``. Frames are replicate-padded by ``cfg.window`` pixels first;
    OpenCV otherwise reports spurious motion at the image corners.
    """
    cfg = cfg or FlowConfig()
    a = _to_gray_u8(frame_a)
    b = _to_gray_u8(frame_b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"frame shapes differ: {a.shape} vs {b.shape}")
    pad = cfg.window
    a = cv2.copyMakeBorder(a, pad, pad, pad, pad, cv2.BORDER_REPLICATE)
    b = cv2.copyMakeBorder(b, pad, pad, pad, pad, cv2.BORDER_REPLICATE)
    flow = cv2.calcOpticalFlowFarneback(
        a, b, None,
        pyr_scale=cfg.pyr_scale,
        levels=cfg.levels,
        winsize=cfg.window,
        iterations=cfg.iterations,
        poly_n=cfg.poly_n,
        poly_sigma=cfg.poly_sigma,
        flags=0,
    )[pad:-pad, pad:-pad]
    flow = np.nan_to_num(flow.astype(np.float64), nan=0.0, posinf=0.0, neginf=0.0)
    return FlowFrame(flow[..., 0], flow[..., 1])


def make_color_wheel():
    """``(55, 3)`` wheel colors in [0, 255]."""
    segments = [(15, (255, 0, 0), (255, 255, 0)),    # red -> yellow
                (6, (255, 255, 0), (0, 255, 0)),      # yellow -> green
                (4, (0, 255, 0), (0, 255, 255)),      # green -> cyan
                (11, (0, 255, 255), (0, 0, 255)),     # cyan -> blue
                (13, (0, 0, 255), (255, 0, 255)),     # blue -> magenta
                (6, (255, 0, 255), (255, 0, 0))]      # magenta -> red
    rows = []
    for n, start, end in segments:
        ramp = np.floor(255 * np.arange(n) / n)
        for i in range(n):
            rows.append([
                s if s == e else (ramp[i] if e > s else 255 - ramp[i])
                for s, e in zip(start, end)
            ])
    return np.array(rows, dtype=np.float64)


_WHEEL = make_color_wheel()


def wheel_position(u, v):
    """Fractional wheel index in [0, 55) for each flow vector."""
    angle = np.arctan2(-np.asarray(v, dtype=np.float64), -np.asarray(u, dtype=np.float64))
    return np.mod((angle + np.pi) / (2 * np.pi) * N_WHEEL, N_WHEEL)


def wheel_color(position):
    """Interpolated wheel color in [0, 1] at fractional ``position``."""
    position = np.asarray(position, dtype=np.float64)
    k0 = np.floor(position).astype(int) % N_WHEEL
    k1 = (k0 + 1) % N_WHEEL
    f = (position - np.floor(position))[..., None]
    return ((1 - f) * _WHEEL[k0] + f * _WHEEL[k1]) / 255.0


def saturation(flow, max_mag="auto"):
    mag = flow.magnitude
    if max_mag == "auto" or max_mag is None:
        max_mag = max(float(mag.max()) if mag.size else 0.0, 1.0)
    elif max_mag <= 0:
        raise ValueError("max_mag must be positive")
    return np.minimum(mag / max_mag, 1.0)


def flow_to_rgb(flow, max_mag="auto"):
    """Encode direction as wheel hue and magnitude as saturation; uint8 ``(H, W, 3)``.

    ``max_mag="auto"`` uses the frame's largest magnitude, floored at 1 px.
    """
    sat = saturation(flow, max_mag)[..., None]
    col = wheel_color(wheel_position(flow.u, flow.v))
    col = 1 - sat * (1 - col)
    return np.floor(255 * col).astype(np.uint8)
