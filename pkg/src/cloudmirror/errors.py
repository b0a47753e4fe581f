"""Exception hierarchy shared by all cloudmirror modules."""


class CloudMirrorError(Exception):
    """Base class for all cloudmirror errors."""


class ParseError(CloudMirrorError):
    """A document or file could not be parsed; message carries the location."""


class ValidationError(CloudMirrorError):
    """Parsed data violates a model invariant (dangling reference, bad range)."""


class ConfigError(CloudMirrorError):
    """A configuration value or combination is unusable (overcommit, bad knob)."""


class ScenarioError(ConfigError):
    """A workload scenario is internally inconsistent or cannot be executed."""


class NotFoundError(CloudMirrorError):
    """Lookup of an id or subject that does not exist."""
