"""Fractional Volterra simulator - stochastic Volterra equations driven by Hilbert-valued fractional Brownian motion."""

__version__ = "0.1.0"
