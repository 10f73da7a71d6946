import numpy as np
import pytest

from models.circle_maps import InverseMap
from models.errors import PreconditionViolation, SearchExhausted
from models.geometry import Arc, directed_distance
from models.schemas import AttractorReport, AttractorVerdict, AttractorWitness, Direction
from models.symbolic import Cylinder, SymbolWindow, TailRule


@pytest.fixture
def window():
    return SymbolWindow(past=(2, 1), future=(1, 2, 2), tail=TailRule.constant(1))


def test_fiber_words(skewprod, window):
    assert skewprod.forward_fiber_word(window, 3).symbols == (1, 2, 2)
    backward = skewprod.backward_fiber_word(window, 3)
    assert backward.symbols == (1, 2, 1)
    assert backward.direction == Direction.BACKWARD


def test_skew_step_round_trip(skewprod, two_rotations, window):
    shifted, y = skewprod.skew_step(two_rotations, window, 0.3, 5)
    assert shifted.symbol_at(0) == window.symbol_at(5)
    back, x = skewprod.skew_step(two_rotations, shifted, y, -5)
    assert back == window
    assert x == pytest.approx(0.3, abs=1e-9)


def test_window_symbols_must_fit_the_system(skewprod, single_rotation, window):
    with pytest.raises(PreconditionViolation):
        skewprod.skew_step(single_rotation, window, 0.3, 1)


def test_involution(skewprod, window):
    flipped = skewprod.involute(window)
    assert [flipped.symbol_at(i) for i in range(-4, 4)] == [window.symbol_at(-i - 1) for i in range(-4, 4)]
    assert skewprod.involute(flipped) == window


def test_random_windows_are_seeded(skewprod):
    a = skewprod.random_window(np.random.default_rng(4), 3)
    b = skewprod.random_window(np.random.default_rng(4), 3)
    assert a == b
    assert a.max_symbol() <= 3
    assert all(1 <= a.symbol_at(i) <= 3 for i in range(-30, 30))


def test_conjugacy_agrees_to_inversion_tolerance(skewprod, morse_smale, two_rotations):
    tol = 10 * skewprod.settings.tol_inv
    assert skewprod.conjugacy_check(morse_smale, trials=50, rng_seed=1).max_discrepancy <= tol
    assert skewprod.conjugacy_check(two_rotations, trials=1000, rng_seed=2).max_discrepancy <= 1e-11


def test_conjugacy_notices_a_broken_inverse(skewprod, morse_smale, monkeypatch):
    monkeypatch.setattr(InverseMap, "_bisect", lambda self, x: x)
    assert skewprod.conjugacy_check(morse_smale, trials=50, rng_seed=1).max_discrepancy > 1e-3


def test_two_rotations_leaf_has_two_points(skewprod, two_rotations):
    w = SymbolWindow.constant(1)
    assert len(skewprod.unstable_leaf_projection(two_rotations, w, 0.0, 0, prune_delta=1e-9).projection) == 1
    for depth in (1, 5, 20):
        report = skewprod.unstable_leaf_projection(two_rotations, w, 0.0, depth, prune_delta=1e-9)
        assert len(report.projection) == 2
        assert directed_distance(np.sort(np.array(report.projection)), np.array([0.0, 0.5])) <= 1e-9


def test_single_rotation_leaf_is_a_point(skewprod, single_rotation):
    report = skewprod.unstable_leaf_projection(single_rotation, SymbolWindow.constant(1), 0.3, 50,
                                               prune_delta=1e-9)
    assert len(report.projection) == 1
    assert report.projection[0] == pytest.approx(0.3, abs=1e-9)


def test_leaf_report_replays(skewprod, morse_smale):
    report = skewprod.unstable_leaf_projection(morse_smale, SymbolWindow.constant(2), 0.1, 6, prune_delta=1 / 512)
    assert len(report.witnesses) == len(report.projection)
    assert skewprod.verify_leaf_report(morse_smale, report) == []

    witnesses = list(report.witnesses)
    witnesses[0] = witnesses[0].model_copy(update={"fiber_point": witnesses[0].fiber_point + 0.1})
    tampered = report.model_copy(update={"witnesses": witnesses})
    assert skewprod.verify_leaf_report(morse_smale, tampered) == [0]


def test_morse_smale_unstable_leaf_is_dense(skewprod, hyperspace, morse_smale):
    report = skewprod.unstable_leaf_projection(morse_smale, SymbolWindow.constant(1), 0.0, 20, prune_delta=1 / 512)
    assert hyperspace.is_epsilon_dense(skewprod.projection_cloud(report), 0.05)


def test_cantor_preserving_stable_leaf_is_confined(skewprod, hyperspace, cantor_preserving):
    F = cantor_preserving.system
    K = hyperspace.cantor_net(12, delta=1 / 4096)
    net = hyperspace.full_circle_net(1 / 1024)
    rng = np.random.default_rng(9)
    windows = [SymbolWindow.constant(s) for s in (1, 3, 6)]
    windows += [skewprod.random_window(rng, F.k) for _ in range(17)]
    for w in windows:
        report = skewprod.stable_leaf_projection(F, w, 0.25, 12, prune_delta=1 / 1024)
        points = np.sort(np.array(report.projection))
        assert directed_distance(points, K.points) <= 0.02
        assert directed_distance(net.points, points) >= 0.1


def test_leaf_density_witness(skewprod, morse_smale, ms_attractor):
    arc = Arc.ball(0.6, 0.1)
    witness = skewprod.leaf_density_certify(morse_smale, ms_attractor, SymbolWindow.constant(1), 0.2,
                                            Cylinder(), arc, budget=60, prune_delta=1 / 512)
    assert arc.contains(witness.fiber_point)
    assert witness.n >= len(witness.sigma)


def test_leaf_density_search_exhausts_for_two_rotations(skewprod, two_rotations):
    unknown = AttractorReport(verdict=AttractorVerdict.INCONCLUSIVE, epsilon=0.05, delta=1 / 512, budget_n=1,
                              witnesses=[])
    with pytest.raises(SearchExhausted):
        skewprod.leaf_density_certify(two_rotations, unknown, SymbolWindow.constant(1), 0.0, Cylinder(),
                                      Arc.ball(0.25, 1 / 32), budget=10, prune_delta=1e-9)


def test_skew_transitivity(semigroup, skewprod, two_rotations):
    minimal = semigroup.certify_minimality(two_rotations, 1 / 16, grid_size=64, depth_budget=200)
    cert = semigroup.transitivity_from_minimality(minimal)
    rng = np.random.default_rng(12)

    def word(max_length):
        return tuple(int(s) for s in rng.integers(1, 3, size=int(rng.integers(0, max_length + 1))))

    cylinders = [(Cylinder(neg_word=word(2), pos_word=word(2)), Cylinder(neg_word=word(2), pos_word=word(2)))
                 for _ in range(50)]
    arcs = [(Arc(start=float(rng.uniform()), length=1 / 8), Arc(start=float(rng.uniform()), length=1 / 8))
            for _ in range(50)]
    report = skewprod.skew_transitivity_check(two_rotations, cert, cylinders, arcs)
    assert report.failures == []
    for sample in report.samples:
        assert arcs[sample.index][1].contains(sample.end)


def test_skew_transitivity_needs_a_complete_certificate(semigroup, skewprod, two_rotations):
    minimal = semigroup.certify_minimality(two_rotations, 1 / 16, grid_size=8, depth_budget=200)
    partial = minimal.model_copy(update={"uncovered": [(0, 0)]})
    with pytest.raises(PreconditionViolation):
        skewprod.skew_transitivity_check(two_rotations, partial, [], [])


@pytest.mark.parametrize("tail", [TailRule.constant(2), TailRule.periodic(), TailRule.seeded(17, 3)])
def test_window_shift_and_involution_agree_with_the_sequence(tail):
    w = SymbolWindow(past=(3, 1, 2), future=(2, 2, 1, 3), tail=tail)
    reference = {i: w.symbol_at(i) for i in range(-30, 30)}
    for n in (-7, -1, 0, 4, 11):
        shifted = w.shift(n)
        assert [shifted.symbol_at(i) for i in range(-15, 15)] == [reference[i + n] for i in range(-15, 15)]
    flipped = w.involute()
    assert [flipped.symbol_at(i) for i in range(-15, 15)] == [reference[-i - 1] for i in range(-15, 15)]
    assert flipped.involute().symbols(-20, 20) == w.symbols(-20, 20)
    assert w.shift(5).involute().shift(5).symbols(-20, 20) == flipped.symbols(-20, 20)


def test_overwrite_replaces_only_the_given_positions():
    w = SymbolWindow(past=(1, 2, 2), future=(2, 1), tail=TailRule.periodic())
    for base in (w, w.shift(3), w.involute()):
        patched = base.overwrite(-2, (3, 3, 3))
        for i in range(-12, 12):
            expected = 3 if -2 <= i < 1 else base.symbol_at(i)
            assert patched.symbol_at(i) == expected
        assert patched.max_symbol() == 3


def test_leaf_witness_window_is_exact(skewprod, morse_smale, ms_attractor):
    w = SymbolWindow(past=(1, 2, 2), future=(2, 1), tail=TailRule.periodic())
    target = Cylinder(neg_word=(1,), pos_word=(2, 2))
    arc = Arc.ball(0.6, 0.1)
    witness = skewprod.leaf_density_certify(morse_smale, ms_attractor, w, 0.2, target, arc, budget=60,
                                            prune_delta=1 / 512)
    n, shifted = witness.n, witness.shifted_window
    assert len(witness.sigma) == n
    assert shifted.symbols(-n - 10, -n) == w.symbols(-n - 10, -n)
    assert shifted.symbols(-n, 0) == list(witness.sigma.symbols)
    assert shifted.symbols(0, 2) == [2, 2]
    assert shifted.symbols(2, 12) == w.symbols(2, 12)
    assert target.contains(shifted)


def test_leaf_search_remeasures_the_horizon_for_a_small_arc(skewprod, morse_smale, ms_attractor, monkeypatch):
    calls = []
    measure = skewprod.hyperspace.strict_attractor_probe

    def recording(F, epsilon, **kwargs):
        calls.append(epsilon)
        return measure(F, epsilon, **kwargs)

    monkeypatch.setattr(skewprod.hyperspace, "strict_attractor_probe", recording)
    arc = Arc.ball(0.6, 0.02)
    witness = skewprod.leaf_density_certify(morse_smale, ms_attractor, SymbolWindow.constant(1), 0.2,
                                            Cylinder(), arc, budget=100, prune_delta=1 / 512)
    assert calls == [pytest.approx(0.02)]
    assert arc.contains(witness.fiber_point)


def test_leaf_search_rejects_a_horizon_it_cannot_refine(skewprod, morse_smale):
    thin = AttractorReport(
        verdict=AttractorVerdict.STRICT, horizon_n0=1, epsilon=0.05, delta=1 / 512, budget_n=1,
        witnesses=[AttractorWitness(seed=0.0, iterations=1, final_distance=0.0, min_distance=0.0)],
    )
    with pytest.raises(PreconditionViolation):
        skewprod.leaf_density_certify(morse_smale, thin, SymbolWindow.constant(1), 0.2, Cylinder(),
                                      Arc.ball(0.6, 0.02), budget=10, prune_delta=1 / 512)


@pytest.mark.parametrize("q", [3, 4])
def test_rational_offset_leaf_has_at_most_q_points(skewprod, catalog, q):
    F = catalog.get("two-rotations", rational_offset=(1, q)).system
    for depth in (1, 5, 20):
        report = skewprod.unstable_leaf_projection(F, SymbolWindow.constant(1), 0.1, depth, prune_delta=1e-9)
        assert len(report.projection) <= q
    assert len(report.projection) == q
