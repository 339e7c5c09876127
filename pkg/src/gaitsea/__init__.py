"""Gait recognition and series-elastic ankle actuator toolkit."""

__version__ = "0.1.0"
