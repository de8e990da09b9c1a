"""Exception types shared across the package."""


class HedgehogError(Exception):
    """Base class for all package errors."""


class GraphValidationError(HedgehogError, ValueError):
    """A graph or potential specification violates an invariant.

    ``path`` names the offending field, e.g. ``"alpha[0]"``.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class NonRegularGraphError(HedgehogError):
    """The matching conditions fail the regularity test (delta_0 ~ 0)."""


class OverflowGuardError(HedgehogError, OverflowError):
    """|Im rho| * length exceeds the representable growth bound."""

    def __init__(self, growth, bound):
        self.growth = growth
        self.bound = bound
        super().__init__(
            f"|Im rho| * length = {growth:.6g} exceeds overflow guard {bound:.6g}"
        )


class RootFindingError(HedgehogError):
    """Zero counting and refinement disagree, or the contour could not be placed."""


class InconsistentDataError(HedgehogError):
    """Spectral data contradict the structure they are supposed to have."""


class ReconstructionError(HedgehogError):
    """A least-squares reconstruction did not reach its residual threshold.

    The best candidate found is attached as ``best``.
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class StageError(HedgehogError):
    """Failure inside a pipeline stage; carries the stage tag and partial results."""

    def __init__(self, stage, cause, partial=None):
        self.stage = stage
        self.cause = cause
        self.partial = partial if partial is not None else {}
        super().__init__(f"stage {stage!r} failed: {cause}")
