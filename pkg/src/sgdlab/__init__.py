"""Simulation laboratory for gradient-descent algorithms and their
continuous-time ODE/SDE models."""

__version__ = "0.1.0"
