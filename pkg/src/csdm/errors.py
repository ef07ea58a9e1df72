"""Exception types raised across the package.

Each class corresponds to one failure mode of the engine; callers (and the
CLI exit-code mapping) can catch them individually instead of parsing
messages.
"""


class CsdmError(Exception):
    """Base class for all package errors."""


class ConfigError(CsdmError):
    """Unknown key, missing key, or badly typed value in a run config."""


class EmptyCollectionError(CsdmError):
    """An operation that needs at least one element got none."""


class DegenerateRangeError(CsdmError):
    """min == max where a non-degenerate range is required."""


class NonPositiveModulusError(CsdmError):
    """Modulus values (or a reference modulus) must be strictly positive."""


class ShapeMismatchError(CsdmError):
    """Two fields/arrays disagree in grid or channel shape."""


class GridDomainMismatchError(CsdmError):
    """A prior was asked to render on a grid with the wrong physical domain."""


class LatentOutOfRangeError(CsdmError):
    """A latent vector lies outside the prior's admissible box."""


class SingularSystemError(CsdmError):
    """The assembled linear system could not be solved."""


class VersionMismatchError(CsdmError):
    """Container format version is not supported by this reader."""


class CorruptPayloadError(CsdmError):
    """Container payload is truncated or fails its checksum."""


class FractionOutOfRangeError(CsdmError):
    """A fraction argument (e.g. a split) must lie in (0, 1)."""


class BadOrderingError(CsdmError):
    """Arguments violate a required ordering (e.g. sigma1 <= sigmaL)."""


class EmptyDatasetError(CsdmError):
    """A dataset with zero records where records are required."""


class NonFiniteLossError(CsdmError):
    """Training produced a NaN/Inf loss."""


class NonFiniteStateError(CsdmError):
    """A sampler chain diverged (non-finite or absurdly large state)."""


class TooFewSamplesError(CsdmError):
    """Not enough samples for the requested estimate."""


class AllWeightsZeroError(CsdmError):
    """Every importance weight underflowed to zero."""


class SingularCovarianceError(CsdmError):
    """A covariance matrix required to be SPD is singular."""
