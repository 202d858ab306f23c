"""Exception types raised by bfgrad."""


class BfgradError(Exception):
    """Base class for all library errors."""


class StructuralError(BfgradError):
    """The tape was used in a way that breaks its ordering or bookkeeping."""


class ContractError(BfgradError, ValueError):
    """A caller violated an operation's precondition (shape, realness, ...)."""


class DomainError(BfgradError, ValueError):
    """The input lies outside the domain where an operation is defined."""
