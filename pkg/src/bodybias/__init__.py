"""Performance-aware body-bias control on a simulated near-threshold die."""

__version__ = "0.1.0"
