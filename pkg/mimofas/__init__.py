"""Module to simulate MIMO fluid antenna systems end to end."""

__version__ = "0.1.0"
