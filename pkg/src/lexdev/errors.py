"""Exception hierarchy shared across the package.

Three broad families map onto CLI exit codes: configuration problems
(exit 2), data/input problems (exit 3) and numeric/degenerate-input
failures (exit 4).
"""


class LexdevError(Exception):
    """Base class for all package errors."""


class ConfigError(LexdevError, ValueError):
    """Invalid configuration value or combination."""


class DataError(LexdevError):
    """Problem with user-supplied data (files, transcripts, probe lists)."""


class TranscriptParseError(DataError):
    """Malformed transcript line."""

    def __init__(self, path, line_number, reason):
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{path}:{line_number}: {reason}")


class TranscriptReadError(DataError):
    """Transcript file could not be read."""

    def __init__(self, path, cause):
        self.path = str(path)
        super().__init__(f"cannot read transcript {path}: {cause}")


class EmptyCorpusError(DataError):
    """No utterances survived filtering."""


class ModelIOError(DataError):
    """Problem persisting or loading a trained model."""


class ModelFormatError(ModelIOError):
    """Persisted model has an unsupported format version."""


class ChecksumError(ModelIOError):
    """Persisted file does not match its recorded checksum."""


class MissingFileError(ModelIOError):
    """A file recorded in the model metadata is absent."""


class NumericError(LexdevError):
    """Numeric failure: degenerate input, undefined statistic, ..."""


class DegenerateInputError(NumericError):
    """Input admits no meaningful answer (e.g. no same-category pairs)."""


class ConstantVectorError(NumericError):
    """Correlation undefined because one input has zero variance."""


class RankDeficiencyError(NumericError):
    """Design matrix is rank deficient."""


class UnknownWordError(NumericError):
    """Word not present in the vocabulary under analysis."""

    def __init__(self, word, candidates=()):
        self.word = word
        self.candidates = list(candidates)
        hint = f" (closest: {', '.join(self.candidates)})" if self.candidates else ""
        super().__init__(f"unknown word {word!r}{hint}")
