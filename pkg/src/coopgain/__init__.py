"""Cooperation-facilitator gains on state-dependent multiple access channels."""

__version__ = "0.1.0"
