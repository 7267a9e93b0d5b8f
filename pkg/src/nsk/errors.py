"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class NskError(Exception):
    """Base class. ``code`` is the machine-readable prefix the CLI prints."""

    code = "E_NSK"
    exit_status = 1


class ConfigError(NskError):
    code = "E_CONFIG"
    exit_status = 2


class DataError(NskError):
    code = "E_DATA"
    exit_status = 3


class MalformedInput(DataError):
    code = "E_MALFORMED"


class SchemaError(DataError):
    code = "E_SCHEMA"


class DegenerateVariance(DataError):
    """Raised when a statistic would divide by a zero variance."""

    code = "E_DEGENERATE"
