"""Delay-limited capacity of OFDM fading channels: single user, broadcast and OFDMA."""

__version__ = "0.1.0"
