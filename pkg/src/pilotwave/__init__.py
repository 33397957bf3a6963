"""Relativistic pilot-wave dynamics with a positive quantum mass field."""

__version__ = "0.1.0"
