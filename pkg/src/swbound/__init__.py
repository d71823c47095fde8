"""Certified bounds and controllers for switched linear quadratic problems."""

__version__ = "0.1.0"

from . import bounds, control, graphs, oracle, sdp, system, tightness

__all__ = [
    "bounds",
    "control",
    "graphs",
    "oracle",
    "sdp",
    "system",
    "tightness",
    "__version__",
]
