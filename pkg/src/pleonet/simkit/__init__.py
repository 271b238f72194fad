"""Simulation kit: event engine, scenarios, metrics and CLI.

Submodules are imported explicitly (``pleonet.simkit.runner`` etc.) so that
the domain modules can depend on :mod:`pleonet.simkit.rng` without cycles.
"""

from .rng import rng_stream

__all__ = ["rng_stream"]
