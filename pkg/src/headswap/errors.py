"""Exception types raised across the package."""


class HeadswapError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HeadswapError, ValueError):
    pass


class EmptyMask(HeadswapError):
    """Projected region lies entirely outside the image."""


class InsufficientTexture(HeadswapError):
    pass


class EmptyTemplate(HeadswapError):
    pass


class DegenerateWeights(HeadswapError):
    pass


class InvalidGrid(HeadswapError, ValueError):
    pass


class EmptyOutput(HeadswapError):
    pass


class InvalidGain(HeadswapError, ValueError):
    pass


class DimensionMismatch(HeadswapError, ValueError):
    pass


class SourceExhausted(HeadswapError):
    """Raised by a frame source when it has no more frames (normal end of stream)."""


class StageFailure(HeadswapError):
    """A pipeline stage raised; the original exception is kept in ``cause``."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause!r}")
        self.stage = stage
        self.cause = cause


class EmptyInput(HeadswapError, ValueError):
    pass


class InvalidScript(HeadswapError, ValueError):
    pass


class InvalidCoverage(HeadswapError, ValueError):
    pass


class OverlapError(HeadswapError):
    pass


class LengthMismatch(HeadswapError, ValueError):
    pass
