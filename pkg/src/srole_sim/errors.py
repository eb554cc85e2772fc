class SimError(Exception):
    """Base class for simulator errors."""


class ConfigError(SimError):
    """Invalid configuration; ``key`` names the offending setting when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ConfigFileError(ConfigError):
    """Config file missing or unreadable."""


class ConfigParseError(ConfigError):
    """Config file is not valid key = value syntax."""


class ContractViolation(SimError, ValueError):
    """A caller broke an operation's precondition."""


class SchedulingError(SimError):
    """An agent had no valid action (e.g. no visible node)."""


class ProtocolError(SimError):
    """A shield delegate session received incomplete boundary data."""
