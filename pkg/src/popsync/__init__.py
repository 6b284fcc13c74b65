"""Countdown games compiled into almost-sure population control instances."""

__version__ = "0.1.0"
