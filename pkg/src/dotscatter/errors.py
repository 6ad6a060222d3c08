"""Exception taxonomy for dotscatter.

Every error raised by the library derives from :class:`SimulationError`,
so callers (in particular the CLI) can distinguish physics/configuration
failures from genuine bugs.
"""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for all dotscatter errors."""


class InvalidParameterError(SimulationError):
    """A scalar parameter is out of its admissible range."""


class GeometryError(SimulationError):
    """Malformed potential geometry (overlapping wells, window outside domain,
    leads too short)."""


class WindowTooSmallError(SimulationError):
    """A bound-state wavefunction has not decayed at the dot-window edge."""


class ResourceLimitError(SimulationError):
    """Estimated memory demand exceeds the configured cap."""

    def __init__(self, message: str, required_bytes: int, cap_bytes: int):
        super().__init__(message)
        self.required_bytes = int(required_bytes)
        self.cap_bytes = int(cap_bytes)


class InsufficientBasisError(SimulationError):
    """The retained channel basis cannot represent the requested solve
    (e.g. the incident channel is missing, or a weakly evanescent channel
    was dropped)."""


class SolverConvergenceError(SimulationError):
    """The linear solver failed to reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = float(residual)


class ContaminatedLeadError(SimulationError):
    """Lead cross-sections are not clean superpositions of the retained
    travelling modes (fit residual above tolerance)."""


class PostSelectionError(SimulationError):
    """Post-selection requested on a side with (numerically) zero weight."""


class UnitarityError(SimulationError):
    """Scattering output violates probability conservation beyond tolerance."""


class NumericalConsistencyError(SimulationError):
    """An internal cross-check failed (negative probabilities, entropy
    eigenvalues out of range, mismatched dual-route results)."""
