"""
Optical flow as color
=====================

Farneback flow between two renders of a face, then the color-wheel encoding
that OF-ConvNet consumes. Hue carries direction, saturation magnitude, and a
still pixel stays white.
"""

import numpy as np

from vvad.flow import FlowConfig, FlowFrame, dense_flow, flow_to_rgb
from vvad.synthetic import SPEAKING, SynthConfig, flow_clip, render_frames, synthesize_clip

for name, (u, v) in {"right": (1, 0), "down": (0, 1), "left": (-1, 0), "up": (0, -1)}.items():
    rgb = flow_to_rgb(FlowFrame(np.array([[u]]), np.array([[v]])), max_mag=1.0)[0, 0]
    print(f"{name:5s} -> RGB {tuple(int(c) for c in rgb)}")

clip = synthesize_clip(SynthConfig(n_clips=2, clip_len=10, head_motion="none"), 0, SPEAKING)
frames = render_frames(clip.geometry, size=48)
flow = dense_flow(frames[2], frames[3], FlowConfig(levels=2, window=9))
print("largest motion (px):", flow.magnitude.max().round(2), "around row", int(np.argmax(flow.magnitude.max(1))))

images = flow_clip(clip.geometry, size=48)
print("flow clip", images.shape, images.dtype, "white fraction", np.mean(images.min(-1) == 255).round(2))
