"""Exception types raised across the lab."""

from __future__ import annotations


class LabError(Exception):
    """Base class for all errors raised by gkdv_lab."""


class ContractError(LabError, ValueError):
    """A precondition of an operation was violated by the caller."""


class CorruptedStateError(LabError, FloatingPointError):
    """A field contains NaN or Inf values."""


class DomainOverflowError(LabError):
    """A field carries too much amplitude near the edge of the periodic box."""
