"""Simulation and analysis of cascaded down-conversion photon-triplet experiments."""

__version__ = "0.1.0"
