"""Exception types shared across the package."""


class EpisodeForgeError(Exception):
    """Base class for all errors raised by episode_forge."""


class DimensionMismatch(EpisodeForgeError, ValueError):
    """Vectors or matrix rows of unequal dimension were mixed."""


class EmptyInput(EpisodeForgeError, ValueError):
    """An operation that needs at least one element received none."""


class UnknownClass(EpisodeForgeError, KeyError):
    """A class label is missing from the table or pool it was looked up in."""


class InfeasibleK(EpisodeForgeError, ValueError):
    """Requested subset size exceeds the rank of the L-ensemble."""


class EnumerationTooLarge(EpisodeForgeError, ValueError):
    """Brute-force subset enumeration would exceed the configured cap."""


class EmbeddingFileError(EpisodeForgeError, ValueError):
    """Embedding CSV could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class PoolTooSmall(EpisodeForgeError, ValueError):
    """Class pool has fewer classes than the requested number of ways."""


class WrongSamplerKind(EpisodeForgeError, ValueError):
    """Operation applied to a sampler kind that does not support it."""


class NonFiniteDifficulty(EpisodeForgeError, ValueError):
    """Reported task difficulty was NaN or infinite."""


class ZeroUniformDiversity(EpisodeForgeError, ValueError):
    """Uniform sampler measured zero diversity; normalization impossible."""
