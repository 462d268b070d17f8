"""Exception hierarchy shared across the package."""


class GhostvarError(Exception):
    """Base class for all errors raised by ghostvar."""


# --- numerical core ---

class DimensionMismatch(GhostvarError):
    pass


class RankDeficient(GhostvarError):
    pass


class NotSymmetric(GhostvarError):
    pass


class NoConvergence(GhostvarError):
    pass


class InvalidProbability(GhostvarError):
    pass


class NotPositiveSemiDefinite(GhostvarError):
    pass


class NonFinite(GhostvarError):
    pass


# --- predictors ---

class SpawnFailed(GhostvarError):
    pass


class ProtocolViolation(GhostvarError):
    pass


class Timeout(GhostvarError):
    pass


# --- datasets / relevance ---

class SchemaMismatch(GhostvarError):
    pass


class RefitFailed(GhostvarError):
    pass


class ParseError(GhostvarError):
    """CSV cell could not be parsed; carries 1-based row/col coordinates."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class MissingResponseColumn(GhostvarError):
    pass


class EmptyFile(GhostvarError):
    pass


class TooFewRows(GhostvarError):
    pass


# --- relevance matrix ---

class ZeroRelevanceVariable(GhostvarError):
    pass


class DegenerateSimilarity(GhostvarError):
    pass


# --- orchestration ---

class ConfigError(GhostvarError):
    pass


class AnalysisError(GhostvarError):
    """Wraps an upstream failure with the pipeline stage it occurred in."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
