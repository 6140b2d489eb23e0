"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error types should
subclass one of the three roots below rather than raising bare ValueError.
"""


class MasklabError(Exception):
    """Base class for all package errors."""


class ConfigError(MasklabError):
    """Bad user configuration: unknown keys, out-of-range values, bad flags."""


class DataError(MasklabError):
    """Malformed input data: netlist syntax, trace files, bitstreams."""


class InvariantError(MasklabError):
    """An internal consistency check failed; indicates a bug, not bad input."""


class NetlistSyntaxError(DataError):
    """Raised by the netlist parser with line/column context."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}" + (f", col {column}" if column is not None else "") + f": {message}"
        super().__init__(message)


class NetlistValidationError(DataError):
    """Structurally invalid netlist (duplicate nets, cycles, bad arity...)."""


class SimulationError(MasklabError):
    """Runtime simulation failure (missing stimulus, X propagation)."""
