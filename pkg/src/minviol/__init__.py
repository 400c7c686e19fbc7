"""Minimum-violation synthesis for stochastic Stackelberg games."""

__version__ = "0.1.0"
