"""
Energy VAD and speech coverage
==============================

The annotation pipeline only needs speech/non-speech segments. Here the
built-in energy detector labels a synthetic recording, then we ask how much of
each two-second window is speech.
"""

import numpy as np

from vvad.audio import coverage, energy_vad, frame_audio

sr = 16000
rng = np.random.default_rng(0)
t = np.arange(6 * sr) / sr
voice = 0.3 * np.sin(2 * np.pi * 180 * t) * (1 + 0.5 * np.sin(2 * np.pi * 3 * t))
signal = np.where((t > 1.0) & (t < 3.5), voice, 0.0) + 0.001 * rng.normal(size=t.size)

segments = energy_vad(frame_audio(signal, sr))
for s in segments:
    print(f"{s.start_s:5.2f} - {s.end_s:5.2f}  {'speech' if s.speech else 'silence'}")

for start in (0.0, 2.0, 4.0):
    print(f"window {start:.0f}-{start + 2:.0f} s: coverage {coverage(segments, start, start + 2):.2f}")
