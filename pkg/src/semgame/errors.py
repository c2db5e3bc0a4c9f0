"""Exception hierarchy shared by all modules."""


class SemGameError(Exception):
    """Base class for package errors."""


class ConfigError(SemGameError, ValueError):
    """Inconsistent scenario or link configuration."""


class SingularityError(SemGameError, ValueError):
    """A matrix that must be inverted is (numerically) singular."""


class DegenerateProblem(SemGameError):
    """Power allocation has no mode with positive gain; any multiplier works."""
