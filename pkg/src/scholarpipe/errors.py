"""Exception types shared across the pipeline."""


class ScholarpipeError(Exception):
    """Base class for all pipeline errors."""


class DuplicatePosition(ScholarpipeError):
    """Two tokens of an inverted abstract claim the same position."""


class MalformedRecord(ScholarpipeError):
    """A raw record line could not be parsed into a work record."""


class SourceIOError(ScholarpipeError):
    """The record source could not be opened or read."""


class EmptyPattern(ScholarpipeError):
    """A matcher was compiled from an empty pattern set."""


class PoolTooSmall(ScholarpipeError):
    """An example pool has fewer terms than a prompt strategy needs."""


class BackendExhausted(ScholarpipeError):
    """The inference backend failed more times than the retry budget allows."""


class EmptyDocument(ScholarpipeError):
    """Section segmentation received empty input."""


class ZeroVector(ScholarpipeError):
    """Cosine similarity of a zero-norm vector is undefined."""


class FrameTooSmall(ScholarpipeError):
    """The sampling frame cannot supply the inflated target."""


class IncompleteTriplet(ScholarpipeError):
    """A work does not carry exactly three coder labels."""


class UndefinedMetric(ScholarpipeError):
    """Precision or recall has an empty denominator."""


class ZeroBase(ScholarpipeError):
    """Growth ratio against a zero base value."""


class SingleTopicUniverse(ScholarpipeError):
    """Entropy normalization needs at least two topics in the universe."""


class MissingPopulation(ScholarpipeError):
    """A country has publications but no population entry."""


class RankDeficient(ScholarpipeError):
    """The design matrix does not have full column rank."""


class UnknownLevel(ScholarpipeError):
    """A record carries a factor level outside the design specification."""


class ConfigError(ScholarpipeError):
    """The pipeline configuration is invalid or incomplete."""


class StageError(ScholarpipeError):
    """A pipeline stage failed; earlier stage outputs are untouched."""
