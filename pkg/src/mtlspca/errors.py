"""Exception hierarchy shared by the numerical core, the protocol and the CLI."""

from __future__ import annotations


class MTLSPCAError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(MTLSPCAError, ValueError):
    """Shapes, indices or task sets are inconsistent with each other."""


class DataError(MTLSPCAError, ValueError):
    """Input values are unusable (non-finite entries, unparsable cells)."""


class InsufficientDataError(DataError):
    """A class holds fewer samples than the half-split estimator needs."""


class DegenerateModelError(MTLSPCAError, ArithmeticError):
    """The projection direction vanishes, so no classifier can be formed."""


class TransportError(MTLSPCAError, ConnectionError):
    """The byte stream to a peer failed. Safe to retry."""
