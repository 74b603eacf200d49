"""Exception hierarchy shared by the sample, estimator and inference layers."""


class GapcrError(Exception):
    """Base class for all package errors."""


class SampleError(GapcrError, ValueError):
    """Raised when raw input cannot form a valid sample.

    The message names the offending subject and stage where applicable.
    """

    def __init__(self, message, subject_id=None, stage=None):
        self.subject_id = subject_id
        self.stage = stage
        where = []
        if subject_id is not None:
            where.append(f"subject {subject_id!r}")
        if stage is not None:
            where.append(f"stage {stage}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class UnidentifiableError(GapcrError, ValueError):
    """Raised when an estimand has no supporting observations."""


class NoStageDataError(UnidentifiableError):
    """Raised when no subject has any record at the requested stage."""

    def __init__(self, stage):
        self.stage = stage
        super().__init__(f"no stage-{stage} data")


class ConfigError(GapcrError, ValueError):
    """Raised for invalid simulation or command-line configuration."""
