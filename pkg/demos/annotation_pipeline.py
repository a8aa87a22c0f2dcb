"""
Automatic clip labeling
=======================

Three faces, one cut, and a VAD track. Speech with a single visible face gives
a speaking clip, silence makes every face silent, and speech with several
faces is thrown away because we cannot tell who talks.
"""

import numpy as np

from vvad.audio import AudioVadSegment
from vvad.pipeline import DetectionFrame, PipelineConfig, run_pipeline

rng = np.random.default_rng(3)
spans = {"A": (0, 200, 20.0), "B": (50, 150, 220.0), "C": (100, 150, 420.0)}
frames = []
for f in range(200):
    boxes = [(x0 + 0.5 * f + rng.normal(0, 1.5), 40 + rng.normal(0, 1.5), 80.0, 96.0, 0.9)
             for a, b, x0 in spans.values() if a <= f < b]
    # a duplicate, weaker detection of face A that NMS should drop
    if f % 7 == 0:
        boxes.append((boxes[0][0] + 3, boxes[0][1] + 2, 80.0, 96.0, 0.5))
    frames.append(DetectionFrame(f, boxes))

vad = [AudioVadSegment(0, 2, True), AudioVadSegment(2, 4, False), AudioVadSegment(4, 8, True)]
clips, tracks = run_pipeline(frames, vad, shots=[150], n_frames=200, cfg=PipelineConfig(clip_len=50))

print("tracks:", [(t.track_id, t.first, t.last) for t in tracks])
for c in clips:
    x, y, side, _ = c.boxes[0]
    print(f"track {c.track_id} frames {c.start:3d}-{c.end:3d} {c.label:8s} first crop ({x}, {y}) side {side}")
