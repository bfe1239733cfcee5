"""Exception types shared across the toolkit.

The CLI maps these onto exit codes; see cli.EXIT_CODES.
"""


class StableDimError(Exception):
    """Base class for all toolkit-specific failures."""


class ConfigInvalid(StableDimError):
    """Model or run configuration failed validation."""


class BudgetExceeded(StableDimError):
    """Requested enumeration exceeds the desk-scale point budget."""


class NewtonDivergence(StableDimError):
    """Newton refinement of a preimage seed failed to converge."""


class ContinuationFailure(StableDimError):
    """A Newton homotopy path stalled before reaching the target parameter."""


class DegenerateSingularValues(StableDimError):
    """Finite-time singular values too close to resolve a stable direction."""


class DepthInsufficient(StableDimError):
    """Prehistory tree too shallow for the requested contraction cutoff."""

    def __init__(self, message, required_depth=None):
        super().__init__(message)
        self.required_depth = required_depth


class PressureNotConverged(StableDimError):
    """Pressure estimate too noisy for the requested root solve."""


class NoSignChange(StableDimError):
    """Bowen-equation bracket endpoints do not straddle a root."""


class EmptyBall(StableDimError):
    """No atoms fell inside a dynamical ball."""


class EmptySlice(StableDimError):
    """No atoms fell inside a stable-segment tube."""


class EmptyComponent(StableDimError):
    """A preimage component carries no atom mass."""


class InsufficientAtoms(StableDimError):
    """Too few atoms for a meaningful regression."""
