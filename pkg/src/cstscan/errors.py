"""Exception hierarchy shared across the package."""


class CstError(Exception):
    """Base class for all cstscan errors."""


class DimensionError(CstError):
    """Operands have mismatched or invalid dimensions."""


class DomainError(CstError):
    """Input is outside the operation's domain (empty region, bad range)."""


class ConfigurationError(CstError):
    """Configuration values are inconsistent with the data they act on."""


class NumericError(CstError):
    """Non-finite values where finite ones are required."""


class BoundsError(CstError):
    """A box or region falls outside its image."""


class LabelLookupError(CstError):
    """A requested component label does not exist."""


class FeatureError(CstError):
    """A crop is too degenerate to featurize."""


class TrainingDataError(CstError):
    """Training set violates a precondition (e.g. missing class)."""


class FormatVersionError(CstError):
    """Serialized artifact has the wrong magic or version."""


class ValidationError(CstError):
    """Manifest or annotation content failed validation."""


class ParseError(CstError):
    """A file could not be parsed; carries position context in the message."""


class PlacementError(CstError):
    """Synthetic shapes could not be placed within the overlap budget."""
