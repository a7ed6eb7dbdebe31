"""Multi-scale segment-and-link text detector: numpy inference, decoding,
loss, and evaluation."""

__version__ = "0.1.0"
