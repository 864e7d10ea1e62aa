"""Exception hierarchy shared by all modules.

Every error carries enough context to be reported by the command-line front
end, which maps the classes onto exit codes (see :mod:`amspec.cli`).
"""

from __future__ import annotations


class AmspecError(Exception):
    """Base class for all library errors."""


class PreconditionError(AmspecError, ValueError):
    """An operation was called outside its documented domain."""


class CoverageGap(AmspecError):
    """Some interior probe point is not covered by any ball of the cover.

    ``points`` holds (a prefix of) the uncovered probe coordinates.
    """

    def __init__(self, message: str, points=None):
        super().__init__(message)
        self.points = points


class DenominatorUnderflow(AmspecError):
    """The partition-of-squares denominator fell below its guard value."""


class IndexOutOfTruncation(AmspecError, KeyError):
    """A lattice index lies outside the finite truncation."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class NyquistViolation(AmspecError):
    """The sampling grid cannot represent the requested frequency content."""


class DimensionMismatch(AmspecError):
    """Operands live on incompatible index sets or grids."""


class TargetNotReached(AmspecError):
    """A fit did not reach the requested accuracy; ``achieved`` is attached."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class NoConvergence(AmspecError):
    """An iterative inversion stopped contracting."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
