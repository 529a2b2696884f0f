"""Shared exception types."""


class ConfigError(ValueError):
    """A scenario or scheme configuration violates a feasibility requirement.

    The message names the violated inequality so the CLI can surface it.
    """


class ProtocolViolationError(RuntimeError):
    """A send was attempted while a packet was still in flight."""


class EnvelopeBreachError(RuntimeError):
    """The estimation error left the range the encoder was sized for."""
