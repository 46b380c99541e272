"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CrowdmapError(Exception):
    """Base class for all package errors."""


class InputError(CrowdmapError, ValueError):
    """Malformed or out-of-contract input."""


class OutOfRangeError(InputError):
    """A query value falls outside the range the data supports."""


class EvaluationError(CrowdmapError):
    """A map cannot be scored against ground truth (too few matches)."""


class GenerationError(CrowdmapError):
    """Simulation environment could not be generated."""


class ServiceError(CrowdmapError):
    """Failure talking to an external labeling or embedding service."""


class TransportError(ServiceError):
    """Network failure, timeout, or non-2xx HTTP status."""


class ProtocolError(ServiceError):
    """The service answered, but the payload violates the contract."""
