"""
Named errors raised by the mirviz modules.

Every error is a ValueError so callers that only care about "bad data" can
catch that; the cli catches MirvizError and exits with status 2.
"""


class MirvizError(ValueError):
    """Base class for data/processing errors."""


# ----------------------------- audio-io -----------------------------

class BadMagic(MirvizError):
    pass


class UnsupportedEncoding(MirvizError):
    pass


class TruncatedChunk(MirvizError):
    pass


class EmptySignal(MirvizError):
    pass


# ----------------------------- spectral -----------------------------

class BadRange(MirvizError):
    pass


class BinAboveNyquist(MirvizError):
    pass


class WrongKind(MirvizError):
    pass


# ----------------------------- beat-sync -----------------------------

class NotMonotonic(MirvizError):
    pass


class TooFewBeats(MirvizError):
    pass


class NoBeats(MirvizError):
    pass


class NoOverlap(MirvizError):
    pass


class ParseError(MirvizError):
    """Unparseable input; `line` is 1-based."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ----------------------------- symbolic -----------------------------

class BadHeader(MirvizError):
    pass


class UnsupportedFormat(MirvizError):
    pass


class UnsupportedDivision(MirvizError):
    pass


class TruncatedTrack(MirvizError):
    pass


class RangeError(MirvizError):
    """A field value outside its allowed range."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptyList(MirvizError):
    pass


class ZeroProfile(MirvizError):
    pass


# ----------------------------- reduce -----------------------------

class TooFewPoints(MirvizError):
    pass


class KTooLarge(MirvizError):
    pass


class PerplexityTooLarge(MirvizError):
    pass


# ----------------------------- similarity -----------------------------

class NotSymmetric(MirvizError):
    pass


class BadDiagonal(MirvizError):
    pass


class LengthMismatch(MirvizError):
    pass


class EmptyVector(MirvizError):
    pass


class TooFewFrames(MirvizError):
    pass


class NotSquare(MirvizError):
    pass


# ----------------------------- pattern-graph / render -----------------------------

class EmptyInput(MirvizError):
    pass


class NonFinite(MirvizError):
    pass


class WrongDimensionality(MirvizError):
    pass


class EmptyEmbedding(MirvizError):
    pass


class NegativeHeight(MirvizError):
    pass


class TooManyVariables(MirvizError):
    pass
