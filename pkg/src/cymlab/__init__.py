"""Spectral laboratory for vortex/Calabi-Yang-Mills systems and Chern-Weil form pipelines."""

__version__ = "0.1.0"
