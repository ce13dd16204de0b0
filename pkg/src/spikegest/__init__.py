"""Gesture classification from multichannel brain recordings with an
event-driven convolutional spiking feature extractor and a KNN readout."""

__version__ = "0.1.0"
