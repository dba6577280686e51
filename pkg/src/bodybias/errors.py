"""Exception hierarchy shared by every module."""


class BodyBiasError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class DomainError(BodyBiasError, ValueError):
    """An argument lies outside the characterized or physical domain."""


class DegenerateFitError(BodyBiasError, ValueError):
    pass


class ConfigurationError(BodyBiasError):
    pass


class LookupFailure(BodyBiasError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class SearchError(BodyBiasError):
    """The maximum-frequency search could not start (the start frequency already fails)."""
