"""Exception types shared across the package."""


class OdselectError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(OdselectError):
    """A CSV cell failed to parse or was non-finite.

    Carries the offending 1-based data row and the column name.
    """

    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class DegenerateDatasetError(OdselectError):
    """Dataset too small, empty, or labels carry a single class."""


class InvalidConfigError(OdselectError):
    """A configuration value violates its documented range."""


class InsufficientSamplesError(OdselectError):
    """A sampling request exceeds the rows available."""


class InvalidHyperparameterError(OdselectError):
    """A detector hyperparameter is incompatible with the dataset."""


class NonFiniteLossError(OdselectError):
    """Factorization diverged; typically the learning rate is too high."""


class LengthMismatchError(OdselectError, ValueError):
    """A vector does not match the length the model was fitted with."""


class VersionMismatchError(OdselectError):
    """A serialized learner carries an unsupported format version."""


class CorruptFileError(OdselectError):
    """A serialized learner is truncated or fails its checksum."""


class NoPositivesError(OdselectError):
    """Average precision is undefined without at least one positive label."""


class TooFewPairsError(OdselectError):
    """The signed-rank test needs at least six nonzero differences."""


class CorpusTooSmallError(OdselectError):
    """Offline training needs more meta-train datasets than requested k."""
