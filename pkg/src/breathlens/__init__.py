"""Breath classification for ventilation waveforms with Grad-CAM explanations."""

__version__ = "0.1.0"
