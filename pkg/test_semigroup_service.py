import itertools
from fractions import Fraction

import numpy as np
import pytest

from conftest import BLEND_B, BLEND_D
from models.circle_maps import RotationMap
from models.errors import BudgetExhausted, CoverFails, CoverMismatch, NonInvertible, PreconditionViolation
from models.geometry import Arc, ArcUnion, circle_distance, directed_distance
from models.schemas import DensityMode, DensityWitness, Direction, IfsSystem, Word


@pytest.fixture(scope="module")
def rotation_and_h(circle):
    return IfsSystem(maps=[RotationMap(angle=Fraction(1, 4)), circle.build_h()], label="rotation+h")


@pytest.fixture(scope="module")
def ms_minimality(semigroup, morse_smale):
    return semigroup.certify_minimality(morse_smale, 0.05, grid_size=8, depth_budget=60)


@pytest.fixture(scope="module")
def ms_wide_cover(semigroup, morse_smale):
    return semigroup.search_expanding_cover(morse_smale, kappa=1.2, word_depth=8, grid_size=24, margin_epsilon=0.05)


def test_words_act_first_to_last(semigroup, rotation_and_h):
    w = Word(symbols=(1, 2))
    assert float(semigroup.apply_word(rotation_and_h, w, 0.05)) == pytest.approx(0.4)
    assert float(semigroup.word_derivative(rotation_and_h, w, 0.05)) == pytest.approx(3.0)


def test_backward_words_use_inverse_maps(semigroup):
    F = IfsSystem(maps=[RotationMap(angle=0.1), RotationMap(angle=0.3)])
    w = Word(symbols=(1, 2), direction=Direction.BACKWARD)
    assert float(semigroup.apply_word(F, w, 0.5)) == pytest.approx(0.1, abs=1e-9)
    y = semigroup.apply_word(F, w, 0.7)
    assert float(semigroup.apply_word(F, w.inverse(), y)) == pytest.approx(0.7, abs=1e-9)


def test_backward_words_need_degree_one(semigroup, circle):
    F = IfsSystem(maps=[circle.build_cantor_cover()])
    with pytest.raises(NonInvertible):
        semigroup.apply_word(F, Word(symbols=(1,), direction=Direction.BACKWARD), 0.3)


def test_symbols_outside_the_alphabet_are_rejected(semigroup, single_rotation):
    with pytest.raises(PreconditionViolation):
        semigroup.apply_word(single_rotation, Word(symbols=(2,)), 0.1)


def test_orbit_matches_brute_enumeration(semigroup, hyperspace, morse_smale):
    depth = 6
    start = hyperspace.cloud([0.1], 1e-9)
    orbit = semigroup.orbit_bfs(morse_smale, start, depth, prune_delta=1e-9)
    brute = np.array([
        float(semigroup.apply_word(morse_smale, Word(symbols=symbols), 0.1))
        for n in range(1, depth + 1)
        for symbols in itertools.product((1, 2), repeat=n)
    ])
    brute.sort()
    assert directed_distance(brute, orbit.points) <= 1e-6
    assert directed_distance(orbit.points, brute) <= 1e-12


def test_target_balls(semigroup):
    balls = semigroup.target_balls(0.1)
    assert len(balls) == 20
    assert all(b.radius == pytest.approx(0.05) for b in balls)


def test_morse_smale_minimality_replays(semigroup, morse_smale, ms_minimality):
    assert ms_minimality.complete
    assert semigroup.verify_density_certificate(morse_smale, ms_minimality).passed


def test_tampered_witness_fails_replay(semigroup, morse_smale, ms_minimality):
    far = ms_minimality.model_copy(update={
        "witnesses": [DensityWitness(seed_index=0, target_index=10, word=Word())],
    })
    result = semigroup.verify_density_certificate(morse_smale, far)
    assert result.failures == [0]


def test_irrational_rotation_is_minimal(semigroup, single_rotation):
    cert = semigroup.certify_minimality(single_rotation, 0.1, depth_budget=200)
    assert cert.complete


def test_rational_rotation_exhausts_the_budget(semigroup):
    F = IfsSystem(maps=[RotationMap(angle=Fraction(1, 2))])
    with pytest.raises(BudgetExhausted) as info:
        semigroup.certify_minimality(F, 0.1, grid_size=4, depth_budget=5)
    assert info.value.partial.uncovered


def test_minimality_needs_epsilon_above_twice_delta(semigroup, morse_smale):
    with pytest.raises(PreconditionViolation):
        semigroup.certify_minimality(morse_smale, 0.1, prune_delta=0.05)


def test_transitivity(semigroup, morse_smale, ms_minimality):
    cert = semigroup.certify_transitivity(morse_smale, 0.1, depth_budget=60)
    assert cert.mode == DensityMode.TRANSITIVITY
    assert cert.complete
    assert semigroup.verify_density_certificate(morse_smale, cert).passed

    derived = semigroup.transitivity_from_minimality(ms_minimality)
    assert derived.complete
    assert semigroup.verify_density_certificate(morse_smale, derived).passed


def test_expanding_cover(semigroup, morse_smale, ms_cover):
    assert len(ms_cover.balls) == 24
    assert semigroup.verify_expanding_cover(morse_smale, ms_cover).passed
    assert semigroup.measure_cover_kappa(morse_smale, ms_cover) >= 1.2


def test_expanding_cover_needs_kappa_above_one(semigroup, morse_smale):
    with pytest.raises(PreconditionViolation):
        semigroup.search_expanding_cover(morse_smale, kappa=1.0, word_depth=4, grid_size=8)


def test_bootstrap_refines_epsilon(semigroup, morse_smale, ms_minimality, ms_wide_cover):
    refined = semigroup.bootstrap_density(morse_smale, ms_wide_cover, ms_minimality, rounds=2)
    assert refined.epsilon == pytest.approx(0.05 / 1.2 ** 2)
    assert all(t.radius == pytest.approx(0.025 / 1.2 ** 2) for t in refined.targets)
    assert semigroup.verify_density_certificate(morse_smale, refined).passed


def test_bootstrap_zero_rounds_is_identity(semigroup, morse_smale, ms_minimality, ms_cover):
    assert semigroup.bootstrap_density(morse_smale, ms_cover, ms_minimality, rounds=0) is ms_minimality


def test_bootstrap_rejects_a_narrow_margin(semigroup, morse_smale, ms_minimality, ms_cover):
    with pytest.raises(CoverMismatch):
        semigroup.bootstrap_density(morse_smale, ms_cover, ms_minimality, rounds=1)


def test_blending_region(semigroup, gap_pair, blend):
    assert blend.contraction_beta < 0.71
    assert blend.cover_slack > 0
    assert semigroup.verify_blending_certificate(gap_pair, blend).passed


def test_blending_fails_with_one_word(semigroup, gap_pair):
    with pytest.raises(CoverFails):
        semigroup.verify_blending(gap_pair, BLEND_B, BLEND_D, [Word(symbols=(1,))])


def test_blending_needs_b_inside_d(semigroup, gap_pair):
    with pytest.raises(PreconditionViolation):
        semigroup.verify_blending(gap_pair, BLEND_D, BLEND_B, [Word(symbols=(1,)), Word(symbols=(2,))])


def test_target_word_lands_near_target(semigroup, gap_pair, blend):
    for target in (0.36, 0.5, 0.61):
        word = semigroup.target_word_search(gap_pair, blend, target, tol=1e-3)
        landed = semigroup.apply_word(gap_pair, word, BLEND_B.midpoint)
        assert float(circle_distance(landed, target)) < 1e-3


def test_target_word_search_on_random_targets(semigroup, gap_pair, blend):
    rng = np.random.default_rng(32)
    for target in rng.uniform(BLEND_B.start, BLEND_B.end, size=32):
        word = semigroup.target_word_search(gap_pair, blend, float(target), tol=1e-3)
        assert float(circle_distance(semigroup.apply_word(gap_pair, word, BLEND_B.midpoint), target)) < 1e-3


def test_target_outside_b_is_rejected(semigroup, gap_pair, blend):
    with pytest.raises(PreconditionViolation):
        semigroup.target_word_search(gap_pair, blend, 0.9, tol=1e-3)


def test_globalization_of_a_rotation(semigroup, single_rotation):
    report = semigroup.search_globalization(single_rotation, Arc.ball(0.5, 0.15), max_length=12)
    assert report.passed
    assert report.forward_words and report.backward_words


def test_perturbation_is_small_and_seeded(semigroup, morse_smale):
    xs = np.linspace(0.0, 1.0, 200, endpoint=False)
    G = semigroup.perturb_system(morse_smale, 1e-3, seed=3)
    again = semigroup.perturb_system(morse_smale, 1e-3, seed=3)
    for original, perturbed, repeat in zip(morse_smale.maps, G.maps, again.maps):
        assert np.max(circle_distance(perturbed(xs), original(xs))) < 2e-3
        assert np.array_equal(perturbed(xs), repeat(xs))

    with pytest.raises(PreconditionViolation):
        semigroup.perturb_system(morse_smale, 0.02, seed=3)


def test_cover_survives_small_perturbation(semigroup, morse_smale, ms_cover):
    G = semigroup.perturb_system(morse_smale, 1e-3, seed=11)
    assert semigroup.verify_expanding_cover(G, ms_cover).passed


def test_absorbing_domain(semigroup, morse_smale, single_rotation):
    U = ArcUnion(arcs=[Arc.ball(0.25, 0.1)])
    attracting = IfsSystem(maps=[morse_smale.maps[1]])
    assert semigroup.check_absorbing_domain(attracting, U)
    assert not semigroup.check_absorbing_domain(single_rotation, U)
    with pytest.raises(PreconditionViolation):
        semigroup.check_absorbing_domain(single_rotation, ArcUnion(arcs=[Arc.full()]))


def test_compose_word(semigroup, circle):
    a, b = 0.1, 0.35
    single = IfsSystem(maps=[RotationMap(angle=a)])
    assert semigroup.compose_word(single, Word(symbols=(1,))) == RotationMap(angle=a)

    pair = IfsSystem(maps=[RotationMap(angle=a), RotationMap(angle=b)])
    both = semigroup.compose_word(pair, Word(symbols=(1, 2)))
    assert circle.eval(both, 0.8) == pytest.approx((0.8 + a + b) % 1.0, abs=1e-12)

    twice_back = semigroup.compose_word(single, Word(symbols=(1, 1), direction=Direction.BACKWARD))
    assert circle.eval(twice_back, 0.05) == pytest.approx((0.05 - 2 * a) % 1.0, abs=1e-9)


def test_compose_word_puts_the_first_symbol_last(semigroup, rotation_and_h):
    composed = semigroup.compose_word(rotation_and_h, Word(symbols=(1, 2)))
    xs = np.linspace(0.0, 0.95, 20)
    assert np.allclose(composed(xs), semigroup.apply_word(rotation_and_h, Word(symbols=(1, 2)), xs), atol=1e-12)


def test_backward_minimality_certificate(semigroup, morse_smale):
    cert = semigroup.certify_minimality(morse_smale, 0.05, grid_size=8, depth_budget=60,
                                        direction=Direction.BACKWARD)
    assert cert.complete
    assert cert.direction == Direction.BACKWARD
    assert all(w.word.direction == Direction.BACKWARD for w in cert.witnesses)
    assert semigroup.verify_density_certificate(morse_smale, cert).passed


@pytest.mark.parametrize("direction", [Direction.FORWARD, Direction.BACKWARD])
def test_morse_smale_minimality_at_one_percent(semigroup, morse_smale, direction):
    cert = semigroup.certify_minimality(morse_smale, 1e-2, grid_size=64, depth_budget=60, direction=direction)
    assert cert.complete
    assert len(cert.seeds) == 64
    assert semigroup.verify_density_certificate(morse_smale, cert).failures == []


def test_staggered_grid(semigroup, single_rotation):
    cert = semigroup.certify_minimality(single_rotation, 0.1, grid_size=4, depth_budget=100, grid_offset=0.5)
    assert cert.seeds == pytest.approx([0.125, 0.375, 0.625, 0.875])
    assert semigroup.verify_density_certificate(single_rotation, cert).passed


def test_absorbing_domain_refutes_transitivity(semigroup, morse_smale):
    attracting = IfsSystem(maps=[morse_smale.maps[1]], label="morse-smale-only")
    assert semigroup.check_absorbing_domain(attracting, ArcUnion(arcs=[Arc.ball(0.25, 0.1)]))
    with pytest.raises(BudgetExhausted) as info:
        semigroup.certify_transitivity(attracting, 0.1, depth_budget=30)
    assert not info.value.partial.complete
    assert info.value.partial.uncovered


def test_bootstrap_five_rounds_rechecked_independently(semigroup, morse_smale, ms_minimality, ms_wide_cover):
    refined = semigroup.bootstrap_density(morse_smale, ms_wide_cover, ms_minimality, rounds=5)
    assert refined.epsilon == pytest.approx(0.05 / 1.2 ** 5)
    assert semigroup.verify_density_certificate(morse_smale, refined).passed

    fresh = semigroup.certify_minimality(morse_smale, refined.epsilon, grid_size=8, depth_budget=60, grid_offset=0.5)
    assert fresh.complete
    assert not set(fresh.seeds) & set(ms_minimality.seeds)
    assert semigroup.verify_density_certificate(morse_smale, fresh).passed


def test_blending_survives_small_perturbation(semigroup, gap_pair):
    # f(1/3) = 1/3 and g(2/3) = 2/3, so a domain with room on both sides
    roomy = Arc(start=0.33, length=0.34)
    words = [Word(symbols=(1,)), Word(symbols=(2,))]
    blend = semigroup.verify_blending(gap_pair, BLEND_B, roomy, words)
    assert blend.contraction_beta < 0.71
    G = semigroup.perturb_system(gap_pair, 1e-3, seed=5)
    assert semigroup.verify_blending_certificate(G, blend).passed


def test_attracting_word_of_the_morse_smale_map(semigroup, morse_smale):
    found = semigroup.find_attracting_word(morse_smale, max_length=2)
    assert found.word == Word(symbols=(2,))
    assert found.point == pytest.approx(0.25, abs=1e-9)
    assert found.multiplier == pytest.approx(0.5, abs=1e-6)


def test_rotations_have_no_attracting_word(semigroup, two_rotations):
    assert semigroup.find_attracting_word(two_rotations, max_length=3) is None
