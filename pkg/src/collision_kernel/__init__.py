"""Simulation and analysis of repeated system-ancilla interactions."""

__version__ = "0.1.0"
