"""Simulation and circuit-learning toolkit for Trotterized XXX spin chains."""

__version__ = "0.1.0"
