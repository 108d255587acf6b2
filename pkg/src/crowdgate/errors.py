"""Exception hierarchy shared by all stages.

The CLI maps these onto exit codes: input errors -> 2, config errors -> 3,
stage failures -> 4.
"""


class CrowdgateError(Exception):
    """Base class for all toolkit errors."""


class InputFormatError(CrowdgateError):
    """Malformed or inconsistent input data (detections file, frame container, CSV)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(CrowdgateError):
    """Invalid or contradictory configuration."""


class StageError(CrowdgateError):
    """A pipeline stage failed on otherwise well-formed input."""


class RoutingError(StageError):
    """Frames exceed the detector count ceiling but no density counts were supplied."""

    def __init__(self, frame_indices):
        self.frame_indices = list(frame_indices)
        shown = ", ".join(str(i) for i in self.frame_indices[:10])
        more = "" if len(self.frame_indices) <= 10 else f" (+{len(self.frame_indices) - 10} more)"
        super().__init__(
            f"density counts required for over-ceiling frames: {shown}{more}"
        )


class RankDeficientError(StageError):
    """The regression design matrix does not have full column rank."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "rank-deficient design matrix; degenerate column(s): "
            + ", ".join(self.columns)
        )
