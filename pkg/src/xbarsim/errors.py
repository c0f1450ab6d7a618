"""Exception types shared across the simulator."""


class XbarsimError(Exception):
    """Base class for all simulator errors."""


class ShapeError(XbarsimError, ValueError):
    """Tensor dimensions do not compose."""


class ParameterError(XbarsimError, ValueError):
    """A numeric or enum parameter is out of its allowed range."""


class FormatError(XbarsimError, ValueError):
    """A file does not follow its declared binary/text format."""


class ConfigError(XbarsimError, ValueError):
    """An experiment configuration is inconsistent or incomplete."""


class TrainingError(XbarsimError, RuntimeError):
    """Training diverged or could not proceed."""
