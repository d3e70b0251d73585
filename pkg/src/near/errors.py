"""Exception hierarchy.

Every error raised by the library derives from :class:`NearError`, which in
turn derives from :class:`ValueError` so callers that only care about bad
input can catch the builtin.  The CLI maps ``type(err).__name__`` into its
machine-readable error record.
"""


class NearError(ValueError):
    """Base class for all library errors."""


# linalg
class NonFiniteInput(NearError):
    pass


class InvalidDistribution(NearError):
    pass


class ZeroMatrix(NearError):
    pass


# netdef
class ShapeMismatch(NearError):
    pass


class SpecError(NearError):
    """Malformed model description (unknown tag, missing key, bad value)."""


# scoring
class InsufficientSamples(NearError):
    pass


class TooManyChannels(NearError):
    pass


class DegenerateLayer(NearError):
    def __init__(self, layer: int, which: str, detail: str = ""):
        self.layer = layer
        self.which = which
        msg = f"layer {layer}: {which} matrix has no non-zero singular value"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


# sizing
class FitDegenerate(NearError):
    pass


class NoThreshold(NearError):
    pass


class SweepError(NearError):
    """A scoring failure inside a size sweep, annotated with layer and size."""

    def __init__(self, layer: int, size: int, cause: Exception):
        self.layer = layer
        self.size = size
        self.cause = cause
        super().__init__(f"layer {layer}, size {size}: {type(cause).__name__}: {cause}")


# evalstats
class DegenerateSample(NearError):
    pass


class InconsistentMethods(NearError):
    pass


# io
class BadMagic(NearError):
    pass


class TruncatedFile(NearError):
    pass


class DimensionOverflow(NearError):
    pass


class RaggedRows(NearError):
    pass


class NonNumericCell(NearError):
    def __init__(self, row: int, col: int, value: str):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell {value!r} at row {row}, column {col}")


class ConfigError(NearError):
    pass
