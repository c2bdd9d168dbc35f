"""Exception hierarchy shared by the library and the CLI."""


class RipostError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(RipostError, ValueError):
    exit_code = 2


class IngestionError(RipostError, ValueError):
    exit_code = 3


class DomainError(RipostError, ValueError):
    """A rect, cut or parameter falls outside the valid domain."""


class QueryError(RipostError, ValueError):
    exit_code = 2


class FormatError(RipostError, ValueError):
    """A serialized view or tensor does not match the expected schema."""

    exit_code = 2


class BudgetViolation(RipostError, RuntimeError):
    """A ledger charge would exceed its allocation. Always an internal bug."""

    exit_code = 4
