import json
import logging
from fractions import Fraction
from typing import Any, List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from pydantic import TypeAdapter

from config.settings import get_settings
from models.circle_maps import (
    CircleMap,
    HermiteKnot,
    HermiteMap,
    IdentityOutsideArcMap,
    InverseMap,
    PiecewisePolyMap,
    PolyPiece,
    RotationMap,
    hermite_coefficients,
    preimages,
)
from models.errors import IllFormedMap, NonDifferentiable, NonInvertible
from models.geometry import Arc, wrap

logger = logging.getLogger(__name__)

F = Fraction
_MAP_ADAPTER = TypeAdapter(CircleMap)


class DerivativeReading(NamedTuple):
    value: float
    at_breakpoint: bool
    non_differentiable: Optional[NonDifferentiable]


class CircleService:
    """Evaluation contracts and constructors for single circle maps."""

    def __init__(self):
        self.settings = get_settings()

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def eval(self, m: CircleMap, x: Any) -> Any:
        m.check()
        out = m(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, m: CircleMap, x: float) -> DerivativeReading:
        """Right-hand derivative at x, flagging breakpoints and corners."""
        x = float(wrap(x))
        right = float(m.lift_derivative(x))
        left = float(m.lift_derivative(np.nextafter(x, -np.inf)))
        breaks = m.breakpoints()
        at_break = bool(breaks.size) and bool(np.any(np.abs(breaks - x) <= 1e-12))
        corner = None
        if abs(right - left) > self.settings.tol_deriv:
            corner = NonDifferentiable(x, left, right)
            logger.warning("✗ %s", corner)
            at_break = True
        return DerivativeReading(right, at_break, corner)

    def inverse_branches(self, m: CircleMap, y: float) -> List[float]:
        """All preimages of y, one per fundamental lift interval, sorted ascending."""
        m.check()
        d = m.degree
        roots = preimages(m, y)
        base = float(m.lift(0.0))
        y = float(wrap(y))
        targets = y + np.ceil(base - y) + np.arange(d, dtype=float)
        residual = np.abs(m.lift(roots) - targets)
        if np.any(residual > 1e-9) or np.unique(np.round(roots, 12)).size != d:
            raise IllFormedMap(f"expected {d} preimages of {y!r}, residuals {residual.tolist()}")
        return sorted(float(r) for r in wrap(roots))

    def inverse(self, m: CircleMap) -> CircleMap:
        if m.degree != 1:
            raise NonInvertible(f"cannot invert a map of degree {m.degree}")
        if isinstance(m, InverseMap):
            return m.inner
        return InverseMap(inner=m)

    # ------------------------------------------------------------------
    # Monotone gap filling
    # ------------------------------------------------------------------

    def monotone_bridge(self, x0, y0, m0, x1, y1, m1) -> List[HermiteKnot]:
        """Knots of a monotone C^1 bridge between two lift endpoints.

        One quintic when it is comfortably increasing; otherwise a transition,
        a constant-slope plateau and a second transition, each monotone.
        """
        run, rise = x1 - x0, y1 - y0
        if run <= 0 or rise <= 0 or m0 <= 0 or m1 <= 0:
            raise IllFormedMap("a monotone bridge needs positive run, rise and end slopes")

        floor = self.settings.well_conditioned_ratio * float(min(m0, m1, rise / run))
        if self._min_slope(x0, y0, m0, x1, y1, m1) >= floor:
            return [HermiteKnot(position=x0, value=y0, slope=m0), HermiteKnot(position=x1, value=y1, slope=m1)]

        a = min(run / 4, rise / (m0 + m1))
        sigma = (rise - a * (m0 + m1) / 2) / (run - a)
        logger.debug("bridge [%s, %s] uses a plateau of slope %s", x0, x1, sigma)
        return [
            HermiteKnot(position=x0, value=y0, slope=m0),
            HermiteKnot(position=x0 + a, value=y0 + a * (m0 + sigma) / 2, slope=sigma),
            HermiteKnot(position=x1 - a, value=y1 - a * (sigma + m1) / 2, slope=sigma),
            HermiteKnot(position=x1, value=y1, slope=m1),
        ]

    def _min_slope(self, x0, y0, m0, x1, y1, m1) -> float:
        coeffs = np.array([float(c) for c in hermite_coefficients(x0, y0, m0, x1, y1, m1)])
        grid = np.linspace(0.0, float(x1 - x0), self.settings.monotonicity_grid)
        return float(np.min(P.polyval(grid, P.polyder(coeffs))))

    def bridge_pieces(self, x0, y0, m0, x1, y1, m1) -> List[PolyPiece]:
        knots = self.monotone_bridge(x0, y0, m0, x1, y1, m1)
        pieces = []
        for a, b in zip(knots, knots[1:]):
            coeffs = hermite_coefficients(a.position, a.value, a.slope, b.position, b.value, b.slope)
            pieces.append(PolyPiece(start=a.position, end=b.position, coeffs=coeffs, origin=a.position))
        return pieces

    def affine_piece(self, start, end, slope, image_of_start) -> PolyPiece:
        return PolyPiece(start=start, end=end, coeffs=[image_of_start, slope], origin=start)

    def assemble(self, pieces: List[PolyPiece], degree: int = 1) -> PiecewisePolyMap:
        m = PiecewisePolyMap(pieces=pieces, degree_of_cover=degree)
        m.check()
        return m

    # ------------------------------------------------------------------
    # Concrete maps
    # ------------------------------------------------------------------

    def build_cantor_cover(self) -> PiecewisePolyMap:
        """Degree-two cover with slope-3 affine pieces on [1/4, 1/3] and [5/12, 1/2]."""
        pieces = [
            PolyPiece(start=F(0), end=F(1, 4), coeffs=[F(0), F(1), F(-8), F(32)]),
            PolyPiece(start=F(1, 4), end=F(1, 3), coeffs=[F(-1, 2), F(3)]),
            *self.bridge_pieces(F(1, 3), F(1, 2), F(3), F(5, 12), F(5, 4), F(3)),
            PolyPiece(start=F(5, 12), end=F(1, 2), coeffs=[F(0), F(3)]),
            PolyPiece(start=F(1, 2), end=F(1), coeffs=[F(-3), F(17), F(-20), F(8)]),
        ]
        return self.assemble(pieces, degree=2)

    def build_gap_pair(self, gap: Optional[Arc] = None) -> Tuple[CircleMap, CircleMap]:
        """The blending pair in gap-normalised coordinates, optionally placed on ``gap``."""
        f = self.assemble([
            PolyPiece(start=F(0), end=F(1, 3), coeffs=[F(0), F(1), F(1), F(-3)]),
            PolyPiece(start=F(1, 3), end=F(2, 3), coeffs=[F(1, 9), F(2, 3)]),
            PolyPiece(start=F(2, 3), end=F(1), coeffs=[F(5), F(-18), F(23), F(-9)]),
        ])
        g = self.assemble([
            PolyPiece(start=F(0), end=F(1, 3), coeffs=[F(0), F(1), F(4), F(-9)]),
            PolyPiece(start=F(1, 3), end=F(2, 3), coeffs=[F(2, 9), F(2, 3)]),
            PolyPiece(start=F(2, 3), end=F(1), coeffs=[F(2), F(-6), F(8), F(-3)]),
        ])
        if gap is None:
            return f, g
        return IdentityOutsideArcMap(inner=f, support=gap), IdentityOutsideArcMap(inner=g, support=gap)

    def build_h(self) -> PiecewisePolyMap:
        """3(x - 1/4) + 1/4 on [1/4, 1/2], closed up monotonically on the complement."""
        pieces = [
            self.affine_piece(F(1, 4), F(1, 2), F(3), F(1, 4)),
            *self.bridge_pieces(F(1, 2), F(1), F(3), F(5, 4), F(5, 4), F(3)),
        ]
        return self.assemble(pieces)

    def build_branch_pair(self) -> Tuple[PiecewisePolyMap, PiecewisePolyMap]:
        """Affine inverses y/3 + 1/6 and y/3 + 1/3 of the slope-3 pieces, as contractions of J = [1/4, 1/2].

        Each is a circle map: affine on J, monotone bridge on the complement.
        """
        branches = []
        for offset in (F(1, 6), F(1, 3)):
            a, b = F(1, 4), F(1, 2)
            fa, fb = a / 3 + offset, b / 3 + offset
            pieces = [
                self.affine_piece(a, b, F(1, 3), fa),
                *self.bridge_pieces(b, fb, F(1, 3), a + 1, fa + 1, F(1, 3)),
            ]
            branches.append(self.assemble(pieces))
        return branches[0], branches[1]

    def build_cantor_address_map(self) -> PiecewisePolyMap:
        """Rewrites depth-two addresses of the middle-thirds set of J = [1/4, 1/2] onto depth one and back.

        [9/36, 12/36] shrinks onto [9/36, 10/36], [15/36, 16/36] slides onto
        [11/36, 12/36] and [17/36, 18/36] stretches onto [15/36, 18/36].
        """
        pieces = [
            self.affine_piece(F(9, 36), F(12, 36), F(1, 3), F(9, 36)),
            *self.bridge_pieces(F(12, 36), F(10, 36), F(1, 3), F(15, 36), F(11, 36), F(1)),
            self.affine_piece(F(15, 36), F(16, 36), F(1), F(11, 36)),
            *self.bridge_pieces(F(16, 36), F(12, 36), F(1), F(17, 36), F(15, 36), F(3)),
            self.affine_piece(F(17, 36), F(18, 36), F(3), F(15, 36)),
            *self.bridge_pieces(F(1, 2), F(1, 2), F(3), F(5, 4), F(5, 4), F(1, 3)),
        ]
        return self.assemble(pieces)

    def build_cantor_swap_map(self) -> PiecewisePolyMap:
        """Exchanges the two halves [1/4, 1/3] and [5/12, 1/2] of the Cantor set by translation."""
        pieces = [
            self.affine_piece(F(1, 4), F(1, 3), F(1), F(5, 12)),
            *self.bridge_pieces(F(1, 3), F(1, 2), F(1), F(5, 12), F(5, 4), F(1)),
            self.affine_piece(F(5, 12), F(1, 2), F(1), F(5, 4)),
            *self.bridge_pieces(F(1, 2), F(4, 3), F(1), F(5, 4), F(17, 12), F(1)),
        ]
        return self.assemble(pieces)

    def build_morse_smale(self, attractor: float, repeller: float, contraction: float) -> HermiteMap:
        """North-south diffeomorphism: f'(attractor) = contraction, f'(repeller) = 1/contraction."""
        a = float(wrap(attractor))
        r = float(wrap(repeller))
        if r < a:
            r += 1.0
        c = float(contraction)
        knots = self.monotone_bridge(a, a, c, r, r, 1.0 / c)
        knots += self.monotone_bridge(r, r, 1.0 / c, a + 1.0, a + 1.0, c)[1:]
        m = HermiteMap(knots=knots)
        m.check()
        return m

    def build_perturbation(self, magnitude: float, rng: np.random.Generator, knots: int = 4) -> HermiteMap:
        """Smooth circle map within ``magnitude`` of the identity, C^1 distortion under 10x."""
        positions = np.arange(knots) / knots
        shifts = magnitude * rng.uniform(-0.5, 0.5, size=knots)
        slopes = 1.0 + magnitude * rng.uniform(-0.25, 0.25, size=knots)
        rows = [(p, p + s, m) for p, s, m in zip(positions, shifts, slopes)]
        rows.append((1.0, 1.0 + shifts[0], slopes[0]))
        m = HermiteMap(knots=[HermiteKnot(position=p, value=v, slope=s) for p, v, s in rows])
        m.check()
        return m

    def rotation(self, angle: Any) -> RotationMap:
        return RotationMap(angle=angle)

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_json(self, m: CircleMap) -> str:
        return json.dumps(_MAP_ADAPTER.dump_python(m, mode="json"), sort_keys=True)

    def from_json(self, payload: str) -> CircleMap:
        m = _MAP_ADAPTER.validate_python(json.loads(payload))
        m.check()
        return m


_circle_service: Optional[CircleService] = None


def get_circle_service() -> CircleService:
    global _circle_service
    if _circle_service is None:
        _circle_service = CircleService()
    return _circle_service
