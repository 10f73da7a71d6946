"""Circle map representations.

Every map is a pydantic model tagged by ``kind`` so a whole system
round-trips through JSON. Rational coefficients are kept as ``Fraction`` and
travel as ``[numerator, denominator]`` pairs; everything else is a float.

Evaluation happens on lifts: ``lift`` and ``lift_derivative`` take numpy
arrays of real numbers and are vectorised. ``lift(x + 1) = lift(x) + degree``.
At a breakpoint the derivative is the right-hand one.
"""
from fractions import Fraction
from functools import cached_property, wraps
from typing import Any, Callable, List, Literal, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as P
from pydantic import BaseModel, BeforeValidator, Field, PlainSerializer, field_validator, model_validator
from typing_extensions import Annotated

from config.settings import get_settings
from models.errors import IllFormedMap, NonInvertible
from models.geometry import Arc, wrap


def _parse_rational(value: Any) -> Union[Fraction, float]:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("booleans are not coefficients")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError("a rational must be given as [numerator, denominator]")
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    raise ValueError(f"cannot read {value!r} as a coefficient")


def _dump_rational(value: Union[Fraction, float]) -> Any:
    if isinstance(value, Fraction):
        return [value.numerator, value.denominator]
    return float(value)


Rational = Annotated[Any, BeforeValidator(_parse_rational), PlainSerializer(_dump_rational, return_type=Any)]


def _vectorised(method: Callable) -> Callable:
    """Accept scalars or arrays; the wrapped method always sees a 1-d float array."""

    @wraps(method)
    def wrapper(self, x):
        arr = np.asarray(x, dtype=float)
        out = method(self, np.atleast_1d(arr))
        return out.reshape(arr.shape)

    return wrapper


def hermite_coefficients(x0, y0, m0, x1, y1, m1) -> List[Any]:
    """Quintic with the given values and slopes at both ends and zero curvature there.

    Coefficients are ascending powers of (x - x0). Exact when all inputs are
    Fractions.
    """
    run = x1 - x0
    rise = y1 - y0
    a = [
        y0,
        run * m0,
        0 * run,
        10 * rise - 6 * run * m0 - 4 * run * m1,
        -15 * rise + 8 * run * m0 + 7 * run * m1,
        6 * rise - 3 * run * m0 - 3 * run * m1,
    ]
    return [a[j] / run ** j for j in range(6)]


class MapBase(BaseModel):
    @property
    def degree(self) -> int:
        return 1

    def lift(self, x):
        raise NotImplementedError

    def lift_derivative(self, x):
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        return np.empty(0)

    def check(self) -> None:
        """Raise IllFormedMap when the representation breaks its invariants."""

    def __call__(self, x):
        return wrap(self.lift(x))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MapBase):
            return NotImplemented
        return type(self) is type(other) and self.model_dump() == other.model_dump()

    __hash__ = None


class RotationMap(MapBase):
    kind: Literal["rotation"] = "rotation"
    angle: Rational

    @_vectorised
    def lift(self, x):
        return x + float(self.angle)

    @_vectorised
    def lift_derivative(self, x):
        return np.ones_like(x)


class PolyPiece(BaseModel):
    start: Rational
    end: Rational
    coeffs: List[Rational]
    origin: Rational = Fraction(0)


class PiecewisePolyMap(MapBase):
    """Polynomial pieces of the lift on one fundamental interval [b0, b0 + 1]."""

    kind: Literal["piecewise_poly"] = "piecewise_poly"
    pieces: List[PolyPiece] = Field(min_length=1)
    degree_of_cover: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _contiguous(self) -> "PiecewisePolyMap":
        for left, right in zip(self.pieces, self.pieces[1:]):
            if abs(float(left.end) - float(right.start)) > 1e-15:
                raise ValueError("pieces must be contiguous")
        span = float(self.pieces[-1].end) - float(self.pieces[0].start)
        if abs(span - 1.0) > 1e-12:
            raise ValueError(f"pieces must span exactly one period, got {span!r}")
        return self

    @property
    def degree(self) -> int:
        return self.degree_of_cover

    @property
    def breaks(self) -> List[Any]:
        return [p.start for p in self.pieces] + [self.pieces[-1].end]

    @cached_property
    def _table(self) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray], List[np.ndarray]]:
        breaks = np.array([float(b) for b in self.breaks])
        origins = np.array([float(p.origin) for p in self.pieces])
        coeffs = [np.array([float(c) for c in p.coeffs]) for p in self.pieces]
        derivs = [P.polyder(c) if c.size > 1 else np.zeros(1) for c in coeffs]
        return breaks, origins, coeffs, derivs

    @cached_property
    def _validated(self) -> bool:
        self.check()
        return True

    def _ensure_valid(self) -> None:
        if not self._validated:
            raise IllFormedMap("map failed validation")

    def _evaluate(self, x: np.ndarray, which: int) -> Tuple[np.ndarray, np.ndarray]:
        table = self._table
        breaks, origins, polys = table[0], table[1], table[2 + which]
        shift = np.floor(x - breaks[0])
        t = x - shift
        idx = np.clip(np.searchsorted(breaks, t, side="right") - 1, 0, len(polys) - 1)
        out = np.empty_like(t)
        for i, c in enumerate(polys):
            mask = idx == i
            if mask.any():
                out[mask] = P.polyval(t[mask] - origins[i], c)
        return out, shift

    @_vectorised
    def lift(self, x):
        self._ensure_valid()
        out, shift = self._evaluate(x, 0)
        return out + shift * self.degree_of_cover

    @_vectorised
    def lift_derivative(self, x):
        self._ensure_valid()
        out, _ = self._evaluate(x, 1)
        return out

    def breakpoints(self) -> np.ndarray:
        return wrap(self._table[0][:-1])

    def check(self) -> None:
        breaks, origins, coeffs, derivs = self._table
        settings = get_settings()
        for i in range(len(coeffs) - 1):
            left = P.polyval(breaks[i + 1] - origins[i], coeffs[i])
            right = P.polyval(breaks[i + 1] - origins[i + 1], coeffs[i + 1])
            if abs(left - right) > 1e-12 * max(1.0, abs(left)):
                raise IllFormedMap(f"lift jumps by {right - left:.3g} at breakpoint {breaks[i + 1]!r}")
        last = P.polyval(breaks[-1] - origins[-1], coeffs[-1])
        first = P.polyval(breaks[0] - origins[0], coeffs[0]) + self.degree_of_cover
        if abs(last - first) > 1e-12 * max(1.0, abs(last)):
            raise IllFormedMap(f"lift is not periodic of degree {self.degree_of_cover}: {last!r} vs {first!r}")
        for i, d in enumerate(derivs):
            grid = np.linspace(breaks[i], breaks[i + 1], settings.monotonicity_grid)
            slopes = P.polyval(grid - origins[i], d)
            if not np.all(slopes > 0.0):
                bad = grid[np.argmin(slopes)]
                raise IllFormedMap(f"lift is not strictly increasing near x={bad!r} (piece {i})")


class HermiteKnot(BaseModel):
    position: Rational
    value: Rational
    slope: Rational


class HermiteMap(MapBase):
    """Monotone C^1 map given by lift knots over one period, quintic between knots."""

    kind: Literal["hermite"] = "hermite"
    knots: List[HermiteKnot] = Field(min_length=2)

    @field_validator("knots")
    @classmethod
    def _period(cls, knots: List[HermiteKnot]) -> List[HermiteKnot]:
        positions = [float(k.position) for k in knots]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("knot positions must increase")
        if abs(positions[-1] - positions[0] - 1.0) > 1e-12:
            raise ValueError("knots must span exactly one period")
        rise = float(knots[-1].value) - float(knots[0].value)
        if rise < 1.0 - 1e-12 or abs(rise - round(rise)) > 1e-12:
            raise ValueError("value rise over one period must be a positive integer")
        return knots

    @property
    def degree(self) -> int:
        return int(round(float(self.knots[-1].value) - float(self.knots[0].value)))

    @cached_property
    def as_piecewise(self) -> PiecewisePolyMap:
        pieces = []
        for a, b in zip(self.knots, self.knots[1:]):
            coeffs = hermite_coefficients(a.position, a.value, a.slope, b.position, b.value, b.slope)
            pieces.append(PolyPiece(start=a.position, end=b.position, coeffs=coeffs, origin=a.position))
        return PiecewisePolyMap(pieces=pieces, degree_of_cover=self.degree)

    def lift(self, x):
        return self.as_piecewise.lift(x)

    def lift_derivative(self, x):
        return self.as_piecewise.lift_derivative(x)

    def breakpoints(self) -> np.ndarray:
        return self.as_piecewise.breakpoints()

    def check(self) -> None:
        self.as_piecewise.check()


class ComposeMap(MapBase):
    """Compose[f, g] is f after g: the last map is applied first."""

    kind: Literal["compose"] = "compose"
    maps: List["CircleMap"] = Field(min_length=1)

    @property
    def degree(self) -> int:
        return int(np.prod([m.degree for m in self.maps]))

    def lift(self, x):
        y = np.asarray(x, dtype=float)
        for m in reversed(self.maps):
            y = m.lift(y)
        return y

    def lift_derivative(self, x):
        y = np.asarray(x, dtype=float)
        d = np.ones_like(y)
        for m in reversed(self.maps):
            d = d * m.lift_derivative(y)
            y = m.lift(y)
        return d

    def breakpoints(self) -> np.ndarray:
        points = [self.maps[-1].breakpoints()]
        for i in range(len(self.maps) - 1):
            pulled = self.maps[i].breakpoints()
            for m in reversed(self.maps[i + 1:]):
                pulled = preimages(m, pulled)
            points.append(pulled)
        return np.unique(wrap(np.concatenate(points)))

    def check(self) -> None:
        for m in self.maps:
            m.check()


class InverseMap(MapBase):
    """Formal inverse of a degree-one map, evaluated by lifted bisection."""

    kind: Literal["inverse"] = "inverse"
    inner: "CircleMap"

    @cached_property
    def _shortcut(self):
        inner = self.inner
        if isinstance(inner, InverseMap):
            return inner.inner
        if isinstance(inner, RotationMap):
            return RotationMap(angle=-inner.angle)
        if isinstance(inner, IdentityOutsideArcMap):
            return IdentityOutsideArcMap(inner=InverseMap(inner=inner.inner), support=inner.support)
        if isinstance(inner, ComposeMap):
            return ComposeMap(maps=[InverseMap(inner=m) for m in reversed(inner.maps)])
        return None

    def _require_invertible(self) -> None:
        if self.inner.degree != 1:
            raise NonInvertible(f"cannot invert a map of degree {self.inner.degree}")

    def lift(self, x):
        self._require_invertible()
        if self._shortcut is not None:
            return self._shortcut.lift(x)
        return self._bisect(np.asarray(x, dtype=float))

    def _bisect(self, x: np.ndarray) -> np.ndarray:
        settings = get_settings()
        c = float(self.inner.lift(0.0))
        lo = x - c - 1.0
        hi = x - c + 1.0
        for _ in range(settings.max_bisection_iterations):
            mid = 0.5 * (lo + hi)
            below = self.inner.lift(mid) < x
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo, initial=0.0) <= settings.tol_inv:
                break
        # secant step inside the final bracket
        f_lo, f_hi = self.inner.lift(lo), self.inner.lift(hi)
        rise = f_hi - f_lo
        safe = np.where(rise > 0.0, rise, 1.0)
        root = np.where(rise > 0.0, lo + (x - f_lo) * (hi - lo) / safe, 0.5 * (lo + hi))
        return np.clip(root, lo, hi)

    def lift_derivative(self, x):
        self._require_invertible()
        if self._shortcut is not None:
            return self._shortcut.lift_derivative(x)
        return 1.0 / self.inner.lift_derivative(self.lift(x))

    def breakpoints(self) -> np.ndarray:
        return wrap(self.inner.lift(self.inner.breakpoints()))

    def check(self) -> None:
        self._require_invertible()
        self.inner.check()


class IdentityOutsideArcMap(MapBase):
    """Acts as ``inner`` (given on [0, 1]) rescaled into ``support``; identity elsewhere."""

    kind: Literal["identity_outside_arc"] = "identity_outside_arc"
    inner: "CircleMap"
    support: Arc

    def _local(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        off = wrap(x - self.support.start)
        inside = off < self.support.length
        return inside, off / self.support.length

    @_vectorised
    def lift(self, x):
        inside, s = self._local(x)
        moved = self.support.length * (self.inner.lift(s) - s)
        return x + np.where(inside, moved, 0.0)

    @_vectorised
    def lift_derivative(self, x):
        inside, s = self._local(x)
        return np.where(inside, self.inner.lift_derivative(s), 1.0)

    def breakpoints(self) -> np.ndarray:
        inner_breaks = self.inner.breakpoints()
        return np.unique(wrap(np.r_[self.support.start, self.support.end,
                                     self.support.start + self.support.length * inner_breaks]))

    def check(self) -> None:
        self.inner.check()
        if self.inner.degree != 1:
            raise IllFormedMap("the inner map of an arc-supported map must have degree one")
        ends = self.inner.lift(np.array([0.0, 1.0]))
        if abs(ends[0]) > 1e-12 or abs(ends[1] - 1.0) > 1e-12:
            raise IllFormedMap("the inner map must fix both ends of [0, 1]")


CircleMap = Annotated[
    Union[RotationMap, PiecewisePolyMap, HermiteMap, ComposeMap, InverseMap, IdentityOutsideArcMap],
    Field(discriminator="kind"),
]

ComposeMap.model_rebuild()
InverseMap.model_rebuild()
IdentityOutsideArcMap.model_rebuild()


def preimages(m: MapBase, ys, tol: Optional[float] = None) -> np.ndarray:
    """Every preimage of every point in ys, ``m.degree`` per point, by bisection on [0, 1)."""
    settings = get_settings()
    tol = settings.tol_inv if tol is None else tol
    ys = wrap(np.atleast_1d(np.asarray(ys, dtype=float)))
    if ys.size == 0:
        return ys
    d = m.degree
    base = float(m.lift(0.0))
    targets = (ys + np.ceil(base - ys))[:, None] + np.arange(d, dtype=float)[None, :]
    targets = targets.ravel()
    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    for _ in range(settings.max_bisection_iterations):
        mid = 0.5 * (lo + hi)
        below = m.lift(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)
