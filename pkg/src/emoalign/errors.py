"""Exception types shared across the toolkit.

Every error raised by emoalign derives from :class:`EmoalignError`, so callers
(and the CLI) can catch one base class and still report the failing module.
"""


class EmoalignError(Exception):
    """Base class for all emoalign errors."""


class ParseError(EmoalignError):
    """A file or response could not be parsed into the expected records."""


class SchemaError(EmoalignError):
    """A record parsed but violates the dataset schema (e.g. label cardinality)."""


class EmptyInput(EmoalignError):
    """An operation requiring a non-empty input received an empty one."""


class ClientError(EmoalignError):
    """Annotation client failed after retries.

    Carries the ids of the samples that could not be annotated.
    """

    def __init__(self, message: str, failed_ids=()):
        super().__init__(message)
        self.failed_ids = list(failed_ids)


class CacheCorruption(EmoalignError):
    """The annotation cache file contains an unreadable entry."""


class LengthError(EmoalignError):
    """A token sequence exceeds the encoder's maximum length."""


class ProjectionError(EmoalignError):
    """A projection produced a vector too close to zero to normalize."""


class ShapeError(EmoalignError):
    """Matrix arguments have incompatible shapes."""


class EmptyBatch(EmoalignError):
    """A training batch contained no samples."""


class CoverageError(EmoalignError):
    """Training data contains samples without annotations.

    Carries the ids of the uncovered samples.
    """

    def __init__(self, message: str, missing_ids=()):
        super().__init__(message)
        self.missing_ids = list(missing_ids)


class DivergenceError(EmoalignError):
    """The training loss became non-finite."""


class EmptyValidation(EmoalignError):
    """Threshold calibration received an empty validation set."""


class MissingThreshold(EmoalignError):
    """A label in the target space has no calibrated threshold."""


class LengthMismatch(EmoalignError):
    """Paired prediction/gold sequences differ in length."""


class DegenerateInput(EmoalignError):
    """A correlation was requested on a constant (zero-variance) vector."""


class KindMismatch(EmoalignError):
    """Dataset kind and label-space kind disagree."""


class MissingThresholds(EmoalignError):
    """Multi-label evaluation was requested without a threshold table."""


class CheckpointError(EmoalignError):
    """A model checkpoint is unreadable or has an unsupported version."""
