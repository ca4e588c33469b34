"""Sensing-budgeted mmWave beam prediction with a Lyapunov-constrained DQN."""

__version__ = "0.1.0"
