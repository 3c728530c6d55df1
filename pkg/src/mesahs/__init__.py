"""Numerical laboratory for Hele-Shaw flow with a mushy region.

Two independent routes to the same moving-boundary flow: march one-phase
enthalpy problems with growing diffusivity and take their monotone limit, or
solve a per-time-slice obstacle problem for the time-integrated pressure.
Cross-validation of the two, plus the monotonicity, nestedness, barrier, and
regularity structure of the limit, is the point of the package.
"""

__version__ = "0.1.0"

from .errors import ConfigError, EnvelopeError, MesaHSError, SolverError
from .geometry import Grid, Scenario, SlotGeometry, build_grid, load_scenario

__all__ = [
    "__version__",
    "ConfigError", "EnvelopeError", "MesaHSError", "SolverError",
    "Grid", "Scenario", "SlotGeometry", "build_grid", "load_scenario",
]
