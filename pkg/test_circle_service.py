from fractions import Fraction

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from models.circle_maps import ComposeMap, InverseMap, PolyPiece, RotationMap
from models.errors import IllFormedMap, NonInvertible
from models.geometry import Arc, circle_distance, wrap


def test_rotation_wraps(circle):
    assert circle.eval(RotationMap(angle=Fraction(1, 4)), 0.9) == pytest.approx(0.15)


def test_rational_angle_serialises_as_pair():
    assert RotationMap(angle=Fraction(1, 3)).model_dump(mode="json")["angle"] == [1, 3]


def test_cover_has_two_preimages(circle):
    cover = circle.build_cantor_cover()
    assert cover.degree == 2
    branches = circle.inverse_branches(cover, 0.3)
    assert len(branches) == 2
    assert np.all(circle_distance(cover(np.array(branches)), 0.3) < 1e-9)


def test_cover_slope_on_cantor_pieces(circle):
    cover = circle.build_cantor_cover()
    assert circle.derivative(cover, 0.3).value == pytest.approx(3.0)
    assert circle.derivative(cover, 0.45).value == pytest.approx(3.0)


def test_h_is_affine_on_the_cantor_interval(circle):
    h = circle.build_h()
    assert circle.eval(h, 0.3) == pytest.approx(0.4)
    assert circle.eval(h, 0.25) == pytest.approx(0.25)


def test_branch_pair_is_affine_on_J(circle):
    psi1, psi2 = circle.build_branch_pair()
    xs = np.linspace(0.25, 0.5, 7)
    assert np.allclose(psi1(xs), xs / 3 + 1 / 6)
    assert np.allclose(psi2(xs), xs / 3 + 1 / 3)


def test_corner_is_reported_not_raised(circle):
    m = circle.assemble([
        PolyPiece(start=0, end=Fraction(1, 2), coeffs=[0, Fraction(1, 2)]),
        PolyPiece(start=Fraction(1, 2), end=1, coeffs=[Fraction(1, 4), Fraction(3, 2)], origin=Fraction(1, 2)),
    ])
    reading = circle.derivative(m, 0.5)
    assert reading.value == pytest.approx(1.5)
    assert reading.at_breakpoint
    assert reading.non_differentiable is not None

    smooth = circle.derivative(RotationMap(angle=0.1), 0.3)
    assert smooth.value == 1.0
    assert smooth.non_differentiable is None


def test_decreasing_lift_is_rejected(circle):
    with pytest.raises(IllFormedMap):
        circle.assemble([PolyPiece(start=0, end=1, coeffs=[0, -1])])


def test_degree_two_map_has_no_inverse(circle):
    cover = circle.build_cantor_cover()
    with pytest.raises(NonInvertible):
        circle.inverse(cover)
    with pytest.raises(NonInvertible):
        InverseMap(inner=cover)(0.3)


def test_morse_smale_multipliers_and_inverse(circle):
    ms = circle.build_morse_smale(0.25, 0.75, 0.5)
    assert circle.derivative(ms, 0.25).value == pytest.approx(0.5)
    assert circle.derivative(ms, 0.75).value == pytest.approx(2.0)
    xs = np.linspace(0.0, 0.99, 23)
    back = circle.inverse(ms)(ms(xs))
    assert np.max(circle_distance(back, xs)) < 1e-9


def test_monotone_bridge_falls_back_to_plateau(circle):
    # steep ends with a shallow average force the three-piece bridge
    knots = circle.monotone_bridge(Fraction(0), Fraction(0), Fraction(20), Fraction(1), Fraction(1, 2), Fraction(20))
    assert len(knots) == 4
    slopes = [float(k.slope) for k in knots]
    assert min(slopes) > 0


def test_map_json_round_trip(circle):
    f, _ = circle.build_gap_pair()
    again = circle.from_json(circle.to_json(f))
    assert again == f
    xs = np.linspace(0.0, 1.0, 11, endpoint=False)
    assert np.array_equal(again(xs), f(xs))


def _homeomorphisms(circle):
    f, g = circle.build_gap_pair()
    f_gap, _ = circle.build_gap_pair(Arc(start=1 / 3, length=1 / 12))
    ms = circle.build_morse_smale(0.25, 0.75, 0.5)
    psi1, _ = circle.build_branch_pair()
    return {
        "rotation": RotationMap(angle=np.sqrt(2.0) - 1.0),
        "gap-f": f,
        "gap-g": g,
        "gap-f-on-circle": f_gap,
        "h": circle.build_h(),
        "branch": psi1,
        "morse-smale": ms,
        "address": circle.build_cantor_address_map(),
        "swap": circle.build_cantor_swap_map(),
        "morse-smale-after-rotation": ComposeMap(maps=[ms, RotationMap(angle=0.3)]),
    }


HOMEOMORPHISMS = ["rotation", "gap-f", "gap-g", "gap-f-on-circle", "h", "branch", "morse-smale", "address",
                  "swap", "morse-smale-after-rotation"]


@pytest.mark.parametrize("name", HOMEOMORPHISMS)
def test_inverse_round_trips(circle, name):
    m = _homeomorphisms(circle)[name]
    xs = np.random.default_rng(7).uniform(0.0, 1.0, 1000)
    back = InverseMap(inner=m)(m(xs))
    assert np.max(circle_distance(back, xs)) < 10 * circle.settings.tol_inv


@pytest.mark.parametrize("name", HOMEOMORPHISMS + ["cover"])
def test_derivative_matches_central_differences(circle, name):
    m = circle.build_cantor_cover() if name == "cover" else _homeomorphisms(circle)[name]
    step = 1e-6
    xs = np.random.default_rng(11).uniform(0.0, 1.0, 1000)
    breaks = m.breakpoints()
    if breaks.size:
        near = np.min(circle_distance(xs[:, None], breaks[None, :]), axis=1)
        xs = xs[near > 10 * step]
    numeric = (m.lift(xs + step) - m.lift(xs - step)) / (2 * step)
    assert np.max(np.abs(numeric - m.lift_derivative(xs))) < 1e-5


def test_chain_rule_on_self_composition(circle):
    f, _ = circle.build_gap_pair()
    ff = ComposeMap(maps=[f, f])
    x = 0.2
    expected = circle.derivative(f, circle.eval(f, x)).value * circle.derivative(f, x).value
    assert circle.derivative(ff, x).value == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("which", ["cover", "gap-f", "gap-g"])
def test_lifts_increase_on_a_fine_grid(circle, which):
    f, g = circle.build_gap_pair()
    m = {"cover": circle.build_cantor_cover(), "gap-f": f, "gap-g": g}[which]
    grid = np.linspace(0.0, 1.0, 10_001)
    assert np.all(np.diff(m.lift(grid)) > 0)


@pytest.mark.parametrize("which", ["cover", "gap-f", "gap-g", "h"])
def test_piece_junctions_are_continuous(circle, which):
    f, g = circle.build_gap_pair()
    m = {"cover": circle.build_cantor_cover(), "gap-f": f, "gap-g": g, "h": circle.build_h()}[which]
    for left, right in zip(m.pieces, m.pieces[1:]):
        at = float(left.end)
        lv = P.polyval(at - float(left.origin), [float(c) for c in left.coeffs])
        rv = P.polyval(at - float(right.origin), [float(c) for c in right.coeffs])
        assert abs(lv - rv) < 1e-12


def test_gap_pair_endpoint_values(circle):
    f, g = circle.build_gap_pair()
    assert circle.eval(f, 1 / 3) == pytest.approx(1 / 3, abs=1e-12)
    assert circle.eval(g, 2 / 3) == pytest.approx(2 / 3, abs=1e-12)
    assert circle.eval(f, 0.5) == pytest.approx(2 * 0.5 / 3 + 1 / 9, abs=1e-12)


def test_cover_lift_gains_two_per_turn(circle):
    cover = circle.build_cantor_cover()
    assert float(cover.lift(1.0 - 1e-13)) == pytest.approx(float(cover.lift(0.0)) + 2.0, abs=1e-10)
    assert float(cover.lift(1.7)) == pytest.approx(float(cover.lift(0.7)) + 2.0, abs=1e-12)


def test_cover_preimages_of_quarter(circle):
    branches = circle.inverse_branches(circle.build_cantor_cover(), 0.25)
    assert branches == pytest.approx([0.25, 5 / 12], abs=1e-9)


def test_rotation_composition_adds_angles(circle):
    m = ComposeMap(maps=[RotationMap(angle=0.3), RotationMap(angle=0.45)])
    assert circle.eval(m, 0.5) == pytest.approx(0.25, abs=1e-15)


def test_composition_reports_pulled_back_breakpoints(circle):
    h = circle.build_h()
    shifted = ComposeMap(maps=[h, RotationMap(angle=0.1)])
    expected = np.unique(wrap(h.breakpoints() - 0.1))
    assert shifted.breakpoints() == pytest.approx(expected, abs=1e-12)

    outer = ComposeMap(maps=[RotationMap(angle=0.1), h])
    assert outer.breakpoints() == pytest.approx(np.unique(h.breakpoints()), abs=1e-12)

    over_cover = ComposeMap(maps=[h, circle.build_cantor_cover()])
    pulled = over_cover.breakpoints()
    cover = circle.build_cantor_cover()
    for b in h.breakpoints():
        hits = pulled[circle_distance(cover(pulled), b) < 1e-9]
        assert np.unique(np.round(hits, 9)).size == 2
