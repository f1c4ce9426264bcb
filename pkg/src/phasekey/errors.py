"""Exception hierarchy shared across the toolkit.

Every error raised on an expected failure path derives from PhaseKeyError so
callers (notably the CLI) can map failures to exit codes without matching on
message text.
"""

from __future__ import annotations


class PhaseKeyError(Exception):
    """Base class for all toolkit errors."""


class DecodeError(PhaseKeyError):
    """A frame or payload violated the binary message layout."""


class NoUsableDataError(PhaseKeyError):
    """An input source yielded no decodable observations."""


class InvalidCombinationError(PhaseKeyError, ValueError):
    """A dual-frequency combination was requested with unusable frequencies."""


class SatelliteNotFoundError(PhaseKeyError, LookupError):
    """A requested satellite has no observations in the store."""


class GeometryMissingError(PhaseKeyError):
    """No satellite geometry records cover the requested interval."""


class ParameterError(PhaseKeyError, ValueError):
    """A numeric parameter violated its documented constraints."""


class UnderdeterminedFitError(ParameterError):
    """Too few samples to fit the requested polynomial degree."""


class DegenerateSeriesError(PhaseKeyError, ValueError):
    """A series is constant (or numerically constant) and cannot be normalized."""


class ScenarioError(PhaseKeyError, ValueError):
    """A synthetic scenario specification is inconsistent."""


class EmptySessionError(PhaseKeyError):
    """An aggregation was requested over a session with no blocks."""
