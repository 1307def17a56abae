"""Pavlovian, model-free and model-based tabular RL on a multi-agent RF grid world."""

__version__ = "0.1.0"
