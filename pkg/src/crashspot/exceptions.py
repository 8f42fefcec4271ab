"""Exception hierarchy shared by all crashspot modules."""


class CrashspotError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CrashspotError, ValueError):
    """Invalid parameter, configuration file or geometry definition."""


class SchemaError(CrashspotError, ValueError):
    """A mapped input column is missing from the source header."""


class DataError(CrashspotError, ValueError):
    """Input data cannot support the requested computation."""


class DegenerateTableError(DataError):
    """A contingency table has a zero margin, so some expected count is 0."""
