"""Scenario-ensemble solvers for mean-field SDEs driven by G-Brownian motion."""

__version__ = "0.1.0"
