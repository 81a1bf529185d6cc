"""Discrete-event simulator for amoebot algorithms under adversarial scheduling."""

__version__ = "0.1.0"
