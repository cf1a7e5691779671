"""livetex: face liveness detection from color-texture histograms and an LSTM classifier."""

__version__ = "0.1.0"
