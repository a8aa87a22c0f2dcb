"""Visual voice activity detection: landmark and optical-flow classifiers,
automatic clip annotation from audio VAD and face tracks, and evaluation."""

__version__ = "0.1.0"
