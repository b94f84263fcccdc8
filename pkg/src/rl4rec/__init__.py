"""Reinforcement-learning recommenders trained in a debiased user simulator."""

__version__ = "0.1.0"
