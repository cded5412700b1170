"""Stereo-pair 3D reconstruction: synthetic data, networks, and tooling."""

__version__ = "0.1.0"
