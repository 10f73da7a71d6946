import itertools
import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import get_settings
from models.circle_maps import CircleMap, ComposeMap, RotationMap
from models.errors import (
    BudgetExhausted,
    CoverFails,
    CoverMismatch,
    NoBranch,
    NonInvertible,
    NotContracting,
    NotFound,
    PreconditionViolation,
    SearchExhausted,
)
from models.geometry import Arc, ArcUnion, PointCloud, circle_distance, merge_order, nearest_distances, wrap
from models.schemas import (
    AttractingFixedPoint,
    BlendingCertificate,
    CertificateKind,
    DensityCertificate,
    DensityMode,
    DensityWitness,
    Direction,
    ExpandingCover,
    GlobalizationReport,
    IfsSystem,
    ReplayResult,
    TargetBall,
    Word,
)
from services.circle_service import get_circle_service
from services.worker_pool import ordered_map

logger = logging.getLogger(__name__)

# a level of the word tree: points, the word reaching each point, and the start label it came from
Level = Tuple[np.ndarray, List[Tuple[int, ...]], np.ndarray]


def _flip(direction: Direction) -> Direction:
    return Direction.BACKWARD if direction == Direction.FORWARD else Direction.FORWARD


class SemigroupService:
    """Words over an IFS, orbit search and the density / expansion / blending certificates."""

    def __init__(self):
        self.settings = get_settings()
        self.circle_service = get_circle_service()

    # ------------------------------------------------------------------
    # Words
    # ------------------------------------------------------------------

    def generators(self, F: IfsSystem, direction: Direction = Direction.FORWARD) -> List[CircleMap]:
        if direction == Direction.FORWARD:
            return list(F.maps)
        if not F.invertible:
            raise NonInvertible(f"system {F.label!r} has maps of degree > 1; backward words are undefined")
        return list(F.inverse().maps)

    def _check_symbols(self, F: IfsSystem, w: Word) -> None:
        bad = [s for s in w.symbols if s > F.k]
        if bad:
            raise PreconditionViolation(f"word {w} uses symbols {bad} outside 1..{F.k}")

    def compose_word(self, F: IfsSystem, w: Word) -> CircleMap:
        """The word as one map; symbols act first-to-last, so the first symbol sits last in Compose."""
        self._check_symbols(F, w)
        maps = self.generators(F, w.direction)
        if w.is_identity:
            return RotationMap(angle=0)
        if len(w) == 1:
            return maps[w.symbols[0] - 1]
        return ComposeMap(maps=[maps[s - 1] for s in reversed(w.symbols)])

    def apply_word(self, F: IfsSystem, w: Word, x) -> np.ndarray:
        self._check_symbols(F, w)
        maps = self.generators(F, w.direction)
        y = wrap(x)
        for s in w.symbols:
            y = maps[s - 1](y)
        return y

    def word_derivative(self, F: IfsSystem, w: Word, x) -> np.ndarray:
        self._check_symbols(F, w)
        maps = self.generators(F, w.direction)
        y = wrap(x)
        d = np.ones_like(y)
        for s in w.symbols:
            m = maps[s - 1]
            d = d * m.lift_derivative(y)
            y = m(y)
        return d

    def image_arc(self, F: IfsSystem, w: Word, arc: Arc) -> Arc:
        """Image of an arc under a word of degree-one maps, from its endpoint images."""
        if arc.is_full or w.is_identity:
            return arc
        a, b = self.apply_word(F, w, np.array([arc.start, arc.end]))
        length = float(wrap(b - a))
        if length <= 0.0:
            return Arc.full()
        return Arc(start=float(a), length=length)

    # ------------------------------------------------------------------
    # Orbits
    # ------------------------------------------------------------------

    def word_levels(self, maps: Sequence[CircleMap], start: np.ndarray, labels: np.ndarray,
                depth: int, delta: float) -> Iterator[Tuple[int, Level]]:
        """Breadth-first word tree, δ-pruned per level.

        Levels keep their points in length-then-lexicographic word order.
        """
        k = len(maps)
        points = wrap(start)
        words: List[Tuple[int, ...]] = [()] * points.size
        yield 0, (points, words, labels)
        for n in range(1, depth + 1):
            candidates = np.stack([m(points) for m in maps], axis=1).ravel()
            kept = np.sort(merge_order(candidates, 0.5 * delta))
            parents, symbols = np.divmod(kept, k)
            points = candidates[kept]
            words = [words[p] + (int(s) + 1,) for p, s in zip(parents, symbols)]
            labels = labels[parents]
            yield n, (points, words, labels)

    def orbit_bfs(self, F: IfsSystem, start: PointCloud, depth: int, prune_delta: float,
                  direction: Direction = Direction.FORWARD) -> PointCloud:
        """Union of F^1(start), ..., F^depth(start)."""
        if depth < 1:
            raise PreconditionViolation("orbit depth must be at least 1")
        maps = self.generators(F, direction)
        collected = []
        labels = np.zeros(len(start), dtype=np.int64)
        for n, (points, _, _) in self.word_levels(maps, start.points, labels, depth, prune_delta):
            if n > 0:
                collected.append(points)
        return PointCloud.from_points(np.concatenate(collected), prune_delta)

    def orbit_escape(self, F: IfsSystem, start: PointCloud, net: PointCloud, depth: int,
                     prune_delta: float, direction: Direction = Direction.FORWARD) -> float:
        """Farthest any orbit point of ``start`` gets from ``net``."""
        orbit = self.orbit_bfs(F, start, depth, prune_delta, direction)
        return float(np.max(nearest_distances(orbit.points, net.points)))

    def _first_hits(self, maps: Sequence[CircleMap], start: np.ndarray, labels: np.ndarray,
                    centres: np.ndarray, radius: float, depth: int,
                    delta: float) -> List[Optional[Tuple[int, Tuple[int, ...]]]]:
        """For each centre, the (label, word) of the first level point strictly within ``radius``."""
        found: List[Optional[Tuple[int, Tuple[int, ...]]]] = [None] * centres.size
        pending = np.arange(centres.size)
        for _, (points, words, labs) in self.word_levels(maps, start, labels, depth, delta):
            order = np.argsort(points, kind="stable")
            ordered = points[order]
            idx = np.searchsorted(ordered, centres[pending])
            right = idx % ordered.size
            left = idx - 1
            d_right = circle_distance(ordered[right], centres[pending])
            d_left = circle_distance(ordered[left], centres[pending])
            nearest = np.where(d_left <= d_right, left, right)
            hit = np.minimum(d_left, d_right) < radius
            for target, pos in zip(pending[hit], order[nearest[hit]]):
                found[target] = (int(labs[pos]), words[pos])
            pending = pending[~hit]
            if pending.size == 0:
                break
        return found

    def target_balls(self, epsilon: float) -> List[TargetBall]:
        """⌈2/ε⌉ equally spaced balls of radius ε/2."""
        count = int(np.ceil(2.0 / epsilon))
        return [TargetBall(center=j / count, radius=epsilon / 2) for j in range(count)]

    # ------------------------------------------------------------------
    # Density certificates
    # ------------------------------------------------------------------

    def certify_minimality(
        self,
        F: IfsSystem,
        epsilon: float,
        grid_size: Optional[int] = None,
        depth_budget: int = 50,
        direction: Direction = Direction.FORWARD,
        prune_delta: Optional[float] = None,
        grid_offset: float = 0.0,
    ) -> DensityCertificate:
        """Words carrying each seed of the grid (j + grid_offset) / grid_size into every ε-ball."""
        prune_delta = prune_delta or epsilon / 8
        if epsilon <= 2 * prune_delta:
            raise PreconditionViolation(f"epsilon ({epsilon}) must exceed 2*delta ({2 * prune_delta})")
        grid_size = grid_size or self.settings.default_seed_count
        seeds = wrap((np.arange(grid_size) + grid_offset) / grid_size)
        targets = self.target_balls(epsilon)
        centres = np.array([t.center for t in targets])
        maps = self.generators(F, direction)

        hits = ordered_map(
            lambda i: self._first_hits(maps, seeds[i:i + 1], np.array([i]), centres,
                                       epsilon / 2, depth_budget, prune_delta),
            range(grid_size),
            self.settings.max_workers,
        )
        witnesses, uncovered = [], []
        for i, row in enumerate(hits):
            for j, hit in enumerate(row):
                if hit is None:
                    uncovered.append((i, j))
                else:
                    witnesses.append(DensityWitness(seed_index=i, target_index=j,
                                                    word=Word(symbols=hit[1], direction=direction)))
        cert = DensityCertificate(epsilon=epsilon, mode=DensityMode.MINIMALITY, direction=direction,
                                  seeds=seeds.tolist(), targets=targets, witnesses=witnesses,
                                  uncovered=uncovered)
        if uncovered:
            logger.warning("✗ %s: %d (seed, ball) pairs uncovered at depth %d",
                           F.label, len(uncovered), depth_budget)
            raise BudgetExhausted(f"{len(uncovered)} (seed, ball) pairs uncovered", partial=cert)
        logger.info("✓ minimality certificate complete (%d seeds, %d balls, %s)",
                    grid_size, len(targets), direction.value)
        return cert

    def certify_transitivity(
        self,
        F: IfsSystem,
        epsilon: float,
        arc_cover_size: Optional[int] = None,
        depth_budget: int = 50,
        direction: Direction = Direction.FORWARD,
        prune_delta: Optional[float] = None,
        samples_per_arc: int = 3,
    ) -> DensityCertificate:
        prune_delta = prune_delta or epsilon / 8
        if epsilon <= 2 * prune_delta:
            raise PreconditionViolation(f"epsilon ({epsilon}) must exceed 2*delta ({2 * prune_delta})")
        count = arc_cover_size or int(np.ceil(2.0 / epsilon))
        source_arcs = [Arc.ball(j / count, epsilon / 2) for j in range(count)]
        samples = [arc.sample(samples_per_arc, closed=False) for arc in source_arcs]
        seeds = np.concatenate(samples)
        seed_sources = np.repeat(np.arange(count), samples_per_arc)
        targets = self.target_balls(epsilon)
        centres = np.array([t.center for t in targets])
        maps = self.generators(F, direction)

        def search(a: int):
            labels = np.flatnonzero(seed_sources == a)
            return self._first_hits(maps, seeds[labels], labels, centres, epsilon / 2, depth_budget, prune_delta)

        hits = ordered_map(search, range(count), self.settings.max_workers)
        witnesses, uncovered = [], []
        for a, row in enumerate(hits):
            for j, hit in enumerate(row):
                if hit is None:
                    uncovered.append((a, j))
                else:
                    witnesses.append(DensityWitness(seed_index=hit[0], target_index=j,
                                                    word=Word(symbols=hit[1], direction=direction)))
        cert = DensityCertificate(epsilon=epsilon, mode=DensityMode.TRANSITIVITY, direction=direction,
                                  seeds=seeds.tolist(), seed_sources=seed_sources.tolist(),
                                  source_arcs=source_arcs, targets=targets, witnesses=witnesses,
                                  uncovered=uncovered)
        if uncovered:
            logger.warning("✗ %s: %d (arc, ball) pairs uncovered at depth %d",
                           F.label, len(uncovered), depth_budget)
            raise BudgetExhausted(f"{len(uncovered)} (arc, ball) pairs uncovered", partial=cert)
        logger.info("✓ transitivity certificate complete (%d arcs, %d balls)", count, len(targets))
        return cert

    def transitivity_from_minimality(self, cert: DensityCertificate) -> DensityCertificate:
        """Every seed reaches every ball, so small arcs around the seeds reach them too."""
        if cert.mode != DensityMode.MINIMALITY or not cert.complete:
            raise PreconditionViolation("needs a complete minimality certificate")
        half = 0.5 / len(cert.seeds)
        return cert.model_copy(update={
            "mode": DensityMode.TRANSITIVITY,
            "seed_sources": list(range(len(cert.seeds))),
            "source_arcs": [Arc.ball(s, half) for s in cert.seeds],
        })

    def verify_density_certificate(self, F: IfsSystem, cert: DensityCertificate) -> ReplayResult:
        failures = []
        for index, witness in enumerate(cert.witnesses):
            x = cert.seeds[witness.seed_index]
            if cert.mode == DensityMode.TRANSITIVITY:
                arc = cert.source_arcs[cert.seed_sources[witness.seed_index]]
                if not arc.closure_contains(x):
                    failures.append(index)
                    continue
            target = cert.targets[witness.target_index]
            y = self.apply_word(F, witness.word, x)
            if float(circle_distance(y, target.center)) >= target.radius + self.settings.tol_inv:
                failures.append(index)
        if failures:
            logger.warning("✗ density replay: %d of %d witnesses fail", len(failures), len(cert.witnesses))
        return ReplayResult(kind=CertificateKind.DENSITY, checked=len(cert.witnesses), failures=failures)

    # ------------------------------------------------------------------
    # Expanding covers
    # ------------------------------------------------------------------

    def _neighbourhood_sup(self, F: IfsSystem, w: Word, ball: Arc, margin: float) -> float:
        """sup of the word's derivative over w^-1(ball) widened by ``margin`` on both sides."""
        ends = self.apply_word(F, w.inverse(), np.array([ball.start, ball.end]))
        length = float(wrap(ends[1] - ends[0])) if not ball.is_full else 1.0
        span = length + 2 * margin
        around = Arc.full() if span >= 1.0 else Arc(start=float(ends[0]) - margin, length=span)
        samples = around.sample(self.settings.derivative_samples)
        return float(np.max(self.word_derivative(F, w, samples)))

    def _expanding_word(self, F: IfsSystem, ball: Arc, bound: float, word_depth: int,
                        margin: float, direction: Direction) -> Optional[Word]:
        maps = self.generators(F, direction)
        inverses = self.generators(F, _flip(direction))
        ball_samples = ball.sample(33)
        # prepend tree: the child [s] + w acts by f_s first, so its preimage is f_s^-1(parent preimage)
        frontier = [((), ball_samples, np.ones_like(ball_samples))]
        for _ in range(word_depth):
            following = []
            for symbols, pre, D in frontier:
                for s in range(1, F.k + 1):
                    p = inverses[s - 1](pre)
                    d = D * maps[s - 1].lift_derivative(p)
                    child = ((s,) + symbols, p, d)
                    if float(np.max(d)) < bound:
                        w = Word(symbols=child[0], direction=direction)
                        if self._neighbourhood_sup(F, w, ball, margin) < bound:
                            return w
                    following.append(child)
            frontier = following
        return None

    def search_expanding_cover(
        self,
        F: IfsSystem,
        kappa: float,
        word_depth: int,
        grid_size: int,
        margin_epsilon: Optional[float] = None,
        direction: Direction = Direction.FORWARD,
    ) -> ExpandingCover:
        if not F.invertible:
            raise NonInvertible("expanding covers need an invertible system")
        if kappa <= 1.0:
            raise PreconditionViolation("kappa must exceed 1")
        radius = 1.0 / grid_size
        margin = margin_epsilon or radius / 2
        bound = 1.0 / (kappa * (1.0 + self.settings.safety_margin))

        balls = [Arc.ball(i / grid_size, radius) for i in range(grid_size)]
        words = ordered_map(
            lambda ball: self._expanding_word(F, ball, bound, word_depth, margin, direction),
            balls,
            self.settings.max_workers,
        )
        uncovered = [balls[i].midpoint for i, w in enumerate(words) if w is None]
        if uncovered:
            logger.warning("✗ %s: no contracting word near %d of %d grid points", F.label, len(uncovered), grid_size)
            raise NotFound(f"no word of length ≤ {word_depth} contracts near {len(uncovered)} grid points",
                           uncovered=uncovered, partial=[w for w in words])
        logger.info("✓ expanding cover found (%d balls, kappa=%g, %s)", grid_size, kappa, direction.value)
        return ExpandingCover(balls=balls, words=words, kappa=kappa, margin_epsilon=margin, direction=direction)

    def measure_cover_kappa(self, F: IfsSystem, cover: ExpandingCover) -> float:
        """Largest kappa the cover's words support on the sampled neighbourhoods."""
        sups = [self._neighbourhood_sup(F, w, ball, cover.margin_epsilon) for ball, w in zip(cover.balls, cover.words)]
        return 1.0 / max(sups)

    def verify_expanding_cover(self, F: IfsSystem, cover: ExpandingCover) -> ReplayResult:
        """Failures are ball indices; -1 marks a gap in the union of balls."""
        failures = [] if ArcUnion(arcs=cover.balls).is_full else [-1]
        for i, (ball, w) in enumerate(zip(cover.balls, cover.words)):
            if self._neighbourhood_sup(F, w, ball, cover.margin_epsilon) >= 1.0 / cover.kappa:
                failures.append(i)
        return ReplayResult(kind=CertificateKind.EXPANDING, checked=len(cover.balls), failures=failures)

    # ------------------------------------------------------------------
    # Bootstrap
    # ------------------------------------------------------------------

    def _voronoi_cores(self, balls: Sequence[Arc]) -> List[Arc]:
        centres = np.array([b.midpoint for b in balls])
        if centres.size == 1:
            return [Arc.full()]
        order = np.argsort(centres)
        ordered = centres[order]
        gaps = wrap(np.roll(ordered, -1) - ordered)
        gaps[gaps == 0.0] = 1.0
        cores: List[Optional[Arc]] = [None] * centres.size
        for rank, i in enumerate(order):
            left = ordered[rank] - 0.5 * gaps[rank - 1]
            right = ordered[rank] + 0.5 * gaps[rank]
            cores[i] = Arc.from_lift(left, right)
        return cores

    def _source_of(self, cert: DensityCertificate, seed_index: int) -> int:
        if cert.mode == DensityMode.TRANSITIVITY:
            return cert.seed_sources[seed_index]
        return seed_index

    def _refine(self, F: IfsSystem, cover: ExpandingCover, cert: DensityCertificate) -> DensityCertificate:
        r = max(t.radius for t in cert.targets)
        if 2 * r > cover.margin_epsilon + 1e-12:
            raise CoverMismatch(f"target radius {r:g} is too large for the cover margin {cover.margin_epsilon:g}")
        lookup: Dict[Tuple[int, int], DensityWitness] = {
            (self._source_of(cert, w.seed_index), w.target_index): w for w in cert.witnesses
        }
        sources = len(cert.source_arcs) if cert.mode == DensityMode.TRANSITIVITY else len(cert.seeds)
        centres = np.array([t.center for t in cert.targets])

        targets: List[TargetBall] = []
        witnesses: List[DensityWitness] = []
        uncovered: List[Tuple[int, int]] = []
        for ball, core, h in zip(cover.balls, self._voronoi_cores(cover.balls), cover.words):
            if not ball.contains_arc(core, tol=1e-12):
                raise CoverMismatch(f"cover ball {ball} does not contain its core {core}")
            preimage = self.image_arc(F, h.inverse(), core)
            reach = Arc.from_lift(preimage.start - r, preimage.end + r)
            chosen = np.flatnonzero(reach.closure_contains(centres))
            if chosen.size == 0:
                continue
            images = np.atleast_1d(self.apply_word(F, h, centres[chosen]))
            for j, y in zip(chosen, images):
                t = len(targets)
                targets.append(TargetBall(center=float(y), radius=r / cover.kappa))
                for source in range(sources):
                    old = lookup.get((source, int(j)))
                    if old is None:
                        uncovered.append((source, t))
                    else:
                        witnesses.append(DensityWitness(seed_index=old.seed_index, target_index=t, word=old.word + h))
        return cert.model_copy(update={
            "epsilon": cert.epsilon / cover.kappa,
            "targets": targets,
            "witnesses": witnesses,
            "uncovered": uncovered,
        })

    def bootstrap_density(self, F: IfsSystem, cover: ExpandingCover, cert: DensityCertificate,
                          rounds: int) -> DensityCertificate:
        """Refine ε to ε·κ^-rounds by appending cover words to existing witnesses."""
        if rounds < 0:
            raise PreconditionViolation("rounds must be non-negative")
        if rounds == 0:
            return cert
        if not cert.complete:
            raise PreconditionViolation("bootstrap needs a complete certificate")
        if cert.direction != cover.direction:
            raise CoverMismatch("certificate and cover act in different directions")
        current = cert
        for round_ in range(1, rounds + 1):
            current = self._refine(F, cover, current)
            logger.info("✓ bootstrap round %d: ε=%.6g with %d balls", round_, current.epsilon, len(current.targets))
        return current

    # ------------------------------------------------------------------
    # Blending regions
    # ------------------------------------------------------------------

    def verify_blending(self, F: IfsSystem, candidate_B: Arc, candidate_D: Arc, words: List[Word],
                        grid: int = 1000) -> BlendingCertificate:
        if not candidate_D.contains_arc(candidate_B):
            raise PreconditionViolation(f"closure of B {candidate_B} is not inside D {candidate_D}")
        if not words:
            raise PreconditionViolation("a blending region needs at least one word")

        ys = candidate_B.sample(grid)
        images = [self.image_arc(F, w, candidate_B) for w in words]
        margins = np.max([img.interior_margin(ys) for img in images], axis=0)
        worst = int(np.argmin(margins))
        slack = float(margins[worst])
        if slack <= 1e-12:
            raise CoverFails(float(ys[worst]))

        xs = candidate_D.sample(grid)
        beta = 0.0
        for w in words:
            inside = candidate_D.closure_contains(self.apply_word(F, w, xs), tol=1e-12)
            if not np.all(inside):
                raise NotContracting(w, float(xs[np.argmin(inside)]), f"word {w} maps closure(D) outside D")
            d = self.word_derivative(F, w, xs)
            peak = int(np.argmax(d))
            if d[peak] * (1.0 + self.settings.safety_margin) >= 1.0:
                raise NotContracting(w, float(xs[peak]))
            beta = max(beta, float(d[peak]))

        logger.info("✓ blending region %s: beta=%.4f slack=%.4g", candidate_B, beta, slack)
        return BlendingCertificate(region_B=candidate_B, domain_D=candidate_D, words=list(words),
                                   contraction_beta=beta, cover_slack=slack)

    def verify_blending_certificate(self, F: IfsSystem, blend: BlendingCertificate) -> ReplayResult:
        try:
            self.verify_blending(F, blend.region_B, blend.domain_D, blend.words)
            failures = []
        except (CoverFails, NotContracting, PreconditionViolation) as e:
            logger.warning("✗ blending replay: %s", e)
            failures = [0]
        return ReplayResult(kind=CertificateKind.BLENDING, checked=1, failures=failures)

    def target_word_search(self, F: IfsSystem, blend: BlendingCertificate, target_x: float, tol: float,
                           max_steps: int = 200) -> Word:
        """A word whose image of B is a tol-small arc around ``target_x``."""
        if tol <= 0:
            raise PreconditionViolation("tol must be positive")
        B = blend.region_B
        if not B.closure_contains(target_x):
            raise PreconditionViolation(f"target {target_x!r} is not in {B}")
        direction = blend.words[0].direction
        chosen: List[Word] = []
        point = float(target_x)
        image = B
        for step in range(max_steps + 1):
            if image.length < tol:
                break
            if step == max_steps:
                raise SearchExhausted(f"image of B still {image.length:.3g} wide after {max_steps} steps",
                                      partial=chosen)
            margins = [self.image_arc(F, w, B).interior_margin(point) for w in blend.words]
            best = int(np.argmax(margins))
            if margins[best] < 0.0:
                raise NoBranch(step, point)
            chosen.append(blend.words[best])
            point = float(self.apply_word(F, blend.words[best].inverse(), point))
            image = self.image_arc(F, self._concatenate(chosen, direction), B)

        word = self._concatenate(chosen, direction)
        landed = self.apply_word(F, word, B.midpoint)
        if float(circle_distance(landed, target_x)) >= tol:
            raise NoBranch(len(chosen), float(landed))
        return word

    def _concatenate(self, chosen: List[Word], direction: Direction) -> Word:
        # h_{i1} ∘ ... ∘ h_{in}: the last pick acts first
        word = Word.identity(direction)
        for w in reversed(chosen):
            word = word + w
        return word

    # ------------------------------------------------------------------
    # Globalization
    # ------------------------------------------------------------------

    def _uncovered(self, F: IfsSystem, B: Arc, words: List[Word], grid: np.ndarray) -> np.ndarray:
        hit = np.zeros(grid.size, dtype=bool)
        for w in words:
            hit |= self.image_arc(F, w, B).contains(grid)
        return grid[~hit]

    def verify_globalization(self, F: IfsSystem, B: Arc, forward_words: List[Word],
                             backward_words: List[Word], grid: int = 1000) -> GlobalizationReport:
        if not F.invertible:
            raise NonInvertible("globalization needs an invertible system")
        points = np.arange(grid) / grid
        # S_j^-1(B) is the image of B under the inverse word
        return GlobalizationReport(
            region=B,
            forward_words=forward_words,
            backward_words=backward_words,
            forward_uncovered=self._uncovered(F, B, forward_words, points).tolist(),
            backward_uncovered=self._uncovered(F, B, [w.inverse() for w in backward_words], points).tolist(),
        )

    def _cover_words(self, F: IfsSystem, B: Arc, max_length: int, grid: np.ndarray, max_words: int) -> List[Word]:
        chosen: List[Word] = []
        remaining = grid
        tried = 0
        for length in range(0, max_length + 1):
            for symbols in itertools.product(range(1, F.k + 1), repeat=length):
                if remaining.size == 0 or tried >= max_words:
                    return chosen
                tried += 1
                w = Word(symbols=symbols)
                inside = self.image_arc(F, w, B).contains(remaining)
                if inside.any():
                    chosen.append(w)
                    remaining = remaining[~inside]
        return chosen

    def search_globalization(self, F: IfsSystem, B: Arc, max_length: int, grid: int = 1000,
                             max_words: int = 4096) -> GlobalizationReport:
        """Greedy length-then-lex search for forward images and backward preimages of B covering the circle."""
        points = np.arange(grid) / grid
        forward = self._cover_words(F, B, max_length, points, max_words)
        # a forward word over F^-1 is S^-1 for S its reversal over F
        backward = [Word(symbols=tuple(reversed(w.symbols)))
                    for w in self._cover_words(F.inverse(), B, max_length, points, max_words)]
        report = self.verify_globalization(F, B, forward, backward, grid)
        if report.passed:
            logger.info("✓ %s globalized by %d forward / %d backward words", B, len(forward), len(backward))
        else:
            logger.warning("✗ %s not globalized within length %d", B, max_length)
        return report

    # ------------------------------------------------------------------
    # Robustness and refutation
    # ------------------------------------------------------------------

    def perturb_system(self, F: IfsSystem, magnitude: float, seed: int) -> IfsSystem:
        """Each generator followed by its own small smooth perturbation, drawn from ``seed``."""
        if not 0.0 <= magnitude < 0.01:
            raise PreconditionViolation("perturbation magnitude must lie in [0, 0.01)")
        streams = np.random.SeedSequence(seed).spawn(F.k)
        maps = []
        for m, stream in zip(F.maps, streams):
            p = self.circle_service.build_perturbation(magnitude, np.random.default_rng(stream))
            maps.append(ComposeMap(maps=[p, m]))
        return IfsSystem(maps=maps, label=f"{F.label}~{magnitude:g}")

    def check_absorbing_domain(self, F: IfsSystem, U: ArcUnion) -> bool:
        """closure(f(U)) ⊂ U for every generator, checked on endpoint images."""
        if U.is_empty or U.is_full:
            raise PreconditionViolation("an interval-domain must be a proper nonempty union of arcs")
        margin = self.settings.tol_inv
        for symbol, m in enumerate(F.maps, start=1):
            if m.degree != 1:
                return False
            for arc in U.arcs:
                image = self.image_arc(F, Word(symbols=(symbol,)), arc)
                if not any(
                    target.contains_arc(image)
                    and target.interior_margin(image.start) > margin
                    and target.interior_margin(wrap(image.end)) > margin
                    for target in U.arcs
                ):
                    return False
        return True

    # ------------------------------------------------------------------
    # Attracting fixed points
    # ------------------------------------------------------------------

    def _displacement(self, F: IfsSystem, w: Word, x: np.ndarray) -> np.ndarray:
        """w(x) - x as a signed value in [-1/2, 1/2)."""
        return wrap(self.apply_word(F, w, x) - x + 0.5) - 0.5

    def _attracting_points(self, F: IfsSystem, w: Word, grid: np.ndarray) -> Iterator[Tuple[float, float]]:
        s = self._displacement(F, w, grid)
        s_next = np.roll(s, -1)
        # w pushes right before the point and left after it
        downward = (s > 0.0) & (s_next <= 0.0) & (s - s_next < 0.5)
        step = 1.0 / grid.size
        for i in np.flatnonzero(downward):
            lo, hi = float(grid[i]), float(grid[i]) + step
            while hi - lo > self.settings.tol_inv:
                mid = 0.5 * (lo + hi)
                if self._displacement(F, w, np.array([mid]))[0] > 0.0:
                    lo = mid
                else:
                    hi = mid
            p = float(wrap(0.5 * (lo + hi)))
            yield p, float(np.abs(self.word_derivative(F, w, np.array([p]))[0]))

    def find_attracting_word(self, F: IfsSystem, max_length: int = 4,
                             grid_size: int = 1024) -> Optional[AttractingFixedPoint]:
        """Shortest forward word with a hyperbolic attracting fixed point.

        A minimal system with such a word has the whole circle as a strict
        attractor, so a hit corroborates strict-attractor evidence.
        """
        if max_length < 1:
            raise PreconditionViolation("max_length must be at least 1")
        grid = np.arange(grid_size) / grid_size
        for length in range(1, max_length + 1):
            for symbols in itertools.product(range(1, F.k + 1), repeat=length):
                w = Word(symbols=symbols)
                for p, multiplier in self._attracting_points(F, w, grid):
                    if multiplier < 1.0:
                        logger.info("✓ %s: %s fixes %.6f with multiplier %.3g", F.label, w, p, multiplier)
                        return AttractingFixedPoint(word=w, point=p, multiplier=multiplier)
        logger.info("✗ %s: no word of length ≤ %d has an attracting fixed point", F.label, max_length)
        return None


_semigroup_service: Optional[SemigroupService] = None


def get_semigroup_service() -> SemigroupService:
    global _semigroup_service
    if _semigroup_service is None:
        _semigroup_service = SemigroupService()
    return _semigroup_service
