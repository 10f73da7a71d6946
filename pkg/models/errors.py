from typing import Any, List, Optional


class CircleIfsError(Exception):
    """Root of every error raised by the toolkit."""


class IllFormedMap(CircleIfsError):
    pass


class NonInvertible(CircleIfsError):
    pass


class NonDifferentiable(CircleIfsError):
    """Recorded (not raised) when one-sided derivatives disagree at a point."""

    def __init__(self, x: float, left: float, right: float):
        self.x = x
        self.left = left
        self.right = right
        super().__init__(f"one-sided derivatives differ at x={x!r}: left={left!r}, right={right!r}")


class InvalidSystem(CircleIfsError, ValueError):
    pass


class PreconditionViolation(CircleIfsError, ValueError):
    pass


class BudgetExhausted(CircleIfsError):
    """A search or iteration ran out of budget; ``partial`` holds what was found."""

    def __init__(self, message: str, partial: Any = None):
        self.partial = partial
        super().__init__(message)


class SearchExhausted(BudgetExhausted):
    pass


class NotFound(BudgetExhausted):
    def __init__(self, message: str, uncovered: List[float], partial: Any = None):
        self.uncovered = uncovered
        super().__init__(message, partial)


class StabilityViolation(CircleIfsError):
    def __init__(self, arc: Any, n: int, distance: float):
        self.arc = arc
        self.n = n
        self.distance = distance
        super().__init__(f"deletion arc {arc} violates the bound at n={n} (d_H={distance:.6g})")


class CoverMismatch(CircleIfsError):
    pass


class CoverFails(CircleIfsError):
    def __init__(self, point: float, message: Optional[str] = None):
        self.point = point
        super().__init__(message or f"point {point!r} of closure(B) is not covered by any image h_i(B)")


class NotContracting(CircleIfsError):
    def __init__(self, word: Any, point: float, message: Optional[str] = None):
        self.word = word
        self.point = point
        super().__init__(message or f"word {word} is not contracting at {point!r}")


class NoBranch(CircleIfsError):
    def __init__(self, step: int, point: float):
        self.step = step
        self.point = point
        super().__init__(f"no branch image contains {point!r} at step {step}")
