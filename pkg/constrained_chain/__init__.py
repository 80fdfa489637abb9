"""
Simulation library for randomly constrained spin chains: sector construction,
time evolution, long-lived state detection, truncated Lanczos analysis and
level statistics.
"""

__version__ = "0.1.0"
