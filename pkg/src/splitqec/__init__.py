"""Simulation, decoding and tomography of a surface-code lattice split."""

__version__ = "0.1.0"
