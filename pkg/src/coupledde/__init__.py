"""Density evolution and coupling design for non-uniformly coupled SC-LDPC ensembles on the BEC."""

__version__ = "0.1.0"
