import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.settings import get_settings
from models.errors import NonInvertible, PreconditionViolation, SearchExhausted
from models.circle_maps import preimages
from models.geometry import Arc, PointCloud, merge_order, wrap
from models.schemas import (
    AttractorReport,
    AttractorVerdict,
    ConjugacyReport,
    DensityCertificate,
    DensityMode,
    Direction,
    IfsSystem,
    LeafDensityWitness,
    LeafReport,
    LeafWitness,
    SkewTransitivityReport,
    SkewTransitivitySample,
    Word,
)
from models.symbolic import Cylinder, SymbolWindow, TailRule
from services.hyperspace_service import get_hyperspace_service
from services.semigroup_service import get_semigroup_service

logger = logging.getLogger(__name__)


class SkewProductService:
    """The one-step skew product Φ(ω, x) = (τω, f_{ω_0}(x)) over finite symbol windows."""

    def __init__(self):
        self.settings = get_settings()
        self.semigroup = get_semigroup_service()
        self.hyperspace = get_hyperspace_service()

    # ------------------------------------------------------------------
    # Fiber words
    # ------------------------------------------------------------------

    def forward_fiber_word(self, w: SymbolWindow, n: int) -> Word:
        """f_ω^n = f_{ω_{n-1}} ∘ ... ∘ f_{ω_0}."""
        return Word(symbols=tuple(w.symbols(0, n)))

    def backward_fiber_word(self, w: SymbolWindow, n: int) -> Word:
        """f_ω^-n = f_{ω_{-n}}^-1 ∘ ... ∘ f_{ω_{-1}}^-1."""
        return Word(symbols=tuple(w.symbol_at(-i) for i in range(1, n + 1)), direction=Direction.BACKWARD)

    def _check_window(self, F: IfsSystem, w: SymbolWindow) -> None:
        if w.max_symbol() > F.k:
            raise PreconditionViolation(f"window uses symbol {w.max_symbol()} but the system has {F.k} maps")

    # ------------------------------------------------------------------
    # Dynamics
    # ------------------------------------------------------------------

    def skew_step(self, F: IfsSystem, w: SymbolWindow, x: float, n: int) -> Tuple[SymbolWindow, float]:
        """Φ^n(w, x)."""
        self._check_window(F, w)
        if n == 0:
            return w, float(wrap(x))
        if n > 0:
            y = self.semigroup.apply_word(F, self.forward_fiber_word(w, n), x)
        else:
            if not F.invertible:
                raise NonInvertible("Φ^-1 needs an invertible system")
            y = self.semigroup.apply_word(F, self.backward_fiber_word(w, -n), x)
        return w.shift(n), float(y)

    def involute(self, w: SymbolWindow) -> SymbolWindow:
        """I(ω)_i = ω_{-i-1}."""
        return w.involute()

    def random_window(self, rng: np.random.Generator, k: int, length: int = 8) -> SymbolWindow:
        past = tuple(int(s) for s in rng.integers(1, k + 1, size=length))
        future = tuple(int(s) for s in rng.integers(1, k + 1, size=length))
        tail = TailRule.seeded(int(rng.integers(0, 2 ** 31)), k)
        return SymbolWindow(past=past, future=future, tail=tail)

    def conjugacy_check(self, F: IfsSystem, trials: int, rng_seed: int = 0, max_n: int = 20) -> ConjugacyReport:
        """Compare the fiber of Φ^-n(ω, x) with that of Ψ^n(I(ω), x), Ψ = τ ⋉ F^-1.

        Ψ is stepped with inverses solved afresh by bisection on the forward
        lifts, so the two sides share no inverse-map code.
        """
        if not F.invertible:
            raise NonInvertible("conjugacy needs an invertible system")
        rng = np.random.default_rng(rng_seed)
        worst, worst_trial = 0.0, None
        for trial in range(trials):
            w = self.random_window(rng, F.k)
            x = float(rng.uniform())
            n = int(rng.integers(0, max_n + 1))
            _, left = self.skew_step(F, w, x, -n)
            right = self._psi_fiber(F, self.involute(w), x, n)
            gap = abs(left - right)
            gap = min(gap, 1.0 - gap)
            if gap > worst:
                worst, worst_trial = gap, trial
        logger.info("✓ conjugacy fuzz: %d trials, max discrepancy %.3g", trials, worst)
        return ConjugacyReport(trials=trials, max_discrepancy=worst, worst_trial=worst_trial)

    def _psi_fiber(self, F: IfsSystem, w: SymbolWindow, x: float, n: int) -> float:
        y = float(wrap(x))
        for s in w.symbols(0, n):
            y = float(wrap(preimages(F.maps[s - 1], y, tol=1e-15)[0]))
        return y

    # ------------------------------------------------------------------
    # Leaf projections
    # ------------------------------------------------------------------

    def _climb(self, F: IfsSystem, direction: Direction, start: float, n: int,
               delta: float) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
        """F^n({start}) with the word reaching each retained point."""
        maps = self.semigroup.generators(F, direction)
        labels = np.zeros(1, dtype=np.int64)
        for _, (points, words, _) in self.semigroup.word_levels(maps, np.array([start]), labels, n, delta):
            pass
        return points, words

    def _leaf(self, F: IfsSystem, w: SymbolWindow, x: float, depth: int, prune_delta: float,
              unstable: bool) -> LeafReport:
        self._check_window(F, w)
        if depth < 0:
            raise PreconditionViolation("depth must be non-negative")
        if not F.invertible:
            raise NonInvertible("leaf projections need an invertible system")
        climb = Direction.FORWARD if unstable else Direction.BACKWARD
        all_points, witnesses = [], []
        for n in range(depth + 1):
            fiber = self.backward_fiber_word(w, n) if unstable else self.forward_fiber_word(w, n)
            start = float(self.semigroup.apply_word(F, fiber, x))
            points, words = self._climb(F, climb, start, n, prune_delta)
            all_points.append(points)
            witnesses.extend(
                LeafWitness(n=n, sigma=Word(symbols=word, direction=climb), fiber_point=float(p))
                for p, word in zip(points, words)
            )
        merged = np.concatenate(all_points)
        kept = np.sort(merge_order(merged, 0.5 * prune_delta))
        kept = kept[np.argsort(merged[kept], kind="stable")]
        return LeafReport(
            window=w,
            x=float(wrap(x)),
            depth=depth,
            unstable=unstable,
            resolution=prune_delta,
            projection=merged[kept].tolist(),
            witnesses=[witnesses[i] for i in kept],
        )

    def unstable_leaf_projection(self, F: IfsSystem, w: SymbolWindow, x: float, depth: int,
                                 prune_delta: Optional[float] = None) -> LeafReport:
        """∪_{n ≤ depth} F^n(f_ω^-n(x)): the fiber projection of the strong unstable leaf."""
        report = self._leaf(F, w, x, depth, prune_delta or self.settings.default_delta, unstable=True)
        logger.debug("unstable leaf at depth %d: %d points", depth, len(report.projection))
        return report

    def stable_leaf_projection(self, F: IfsSystem, w: SymbolWindow, x: float, depth: int,
                               prune_delta: Optional[float] = None) -> LeafReport:
        """∪_{n ≤ depth} (F^-1)^n(f_ω^n(x)): the fiber projection of the strong stable leaf."""
        report = self._leaf(F, w, x, depth, prune_delta or self.settings.default_delta, unstable=False)
        logger.debug("stable leaf at depth %d: %d points", depth, len(report.projection))
        return report

    def projection_cloud(self, report: LeafReport) -> PointCloud:
        return PointCloud.from_points(report.projection, report.resolution)

    def replay_leaf_witness(self, F: IfsSystem, report: LeafReport, index: int) -> float:
        """Circle distance between the stored fiber point and a fresh evaluation of its witness."""
        witness = report.witnesses[index]
        if report.unstable:
            fiber = self.backward_fiber_word(report.window, witness.n)
        else:
            fiber = self.forward_fiber_word(report.window, witness.n)
        start = self.semigroup.apply_word(F, fiber, report.x)
        y = float(self.semigroup.apply_word(F, witness.sigma, start))
        gap = abs(y - witness.fiber_point)
        return min(gap, 1.0 - gap)

    def verify_leaf_report(self, F: IfsSystem, report: LeafReport) -> List[int]:
        tol = 10 * self.settings.tol_inv
        return [i for i in range(len(report.witnesses)) if self.replay_leaf_witness(F, report, i) > tol]

    # ------------------------------------------------------------------
    # Leaf density
    # ------------------------------------------------------------------

    def _inradius(self, F: IfsSystem, alpha: Word, target_arc: Arc) -> float:
        return self.semigroup.image_arc(F, alpha.inverse(), target_arc).radius

    def leaf_density_certify(
        self,
        F: IfsSystem,
        attractor: AttractorReport,
        w: SymbolWindow,
        x: float,
        target: Cylinder,
        target_arc: Arc,
        budget: Optional[int] = None,
        prune_delta: Optional[float] = None,
    ) -> LeafDensityWitness:
        """A point of W^uu(ω, x) inside target × target_arc, built as f_α ∘ f_β ∘ f_ω^-n(x)."""
        self._check_window(F, w)
        budget = budget or self.settings.leaf_search_budget
        delta = prune_delta or self.settings.default_delta
        alpha = Word(symbols=target.neg_word)
        r = len(alpha)
        inradius = self._inradius(F, alpha, target_arc)

        if attractor.verdict == AttractorVerdict.STRICT and attractor.horizon_n0 is not None:
            if attractor.epsilon > inradius:
                attractor = self._horizon_at(F, attractor, inradius)
            m = attractor.horizon_n0
        else:
            logger.warning("✗ no strict attractor evidence for %s; searching from m=1", F.label)
            m = 1

        for length in range(m, max(m, budget) + 1):
            n = length + r
            start = float(self.semigroup.apply_word(F, self.backward_fiber_word(w, n), x))
            points, words = self._climb(F, Direction.FORWARD, start, length, delta)
            landed = self.semigroup.apply_word(F, alpha, points) if r else points
            inside = np.flatnonzero(target_arc.contains(landed))
            if inside.size == 0:
                continue
            first = int(inside[0])
            sigma = Word(symbols=words[first]) + alpha
            fiber_point = float(self.semigroup.apply_word(F, sigma, start))
            logger.info("✓ leaf witness at n=%d with |σ|=%d", n, len(sigma))
            return LeafDensityWitness(
                sigma=sigma,
                n=n,
                fiber_point=fiber_point,
                target=target,
                target_arc=target_arc,
                shifted_window=self._shifted_window(w, sigma, n, target),
            )
        raise SearchExhausted(f"no β of length {m}..{max(m, budget)} reaches {target_arc}",
                              partial={"inradius": inradius, "m": m})

    def _horizon_at(self, F: IfsSystem, attractor: AttractorReport, epsilon: float) -> AttractorReport:
        """Re-measure the uniform horizon at a finer ε over the same seeds and budget."""
        if epsilon <= 0.0:
            raise PreconditionViolation("the pulled-back target arc is empty")
        delta = min(attractor.delta, epsilon / 4)
        logger.info("re-measuring the horizon of %s at ε=%g, δ=%g (was ε=%g)", F.label, epsilon, delta,
                    attractor.epsilon)
        finer = self.hyperspace.strict_attractor_probe(F, epsilon, seeds=[w.seed for w in attractor.witnesses],
                                                       budget_n=attractor.budget_n, delta=delta)
        if finer.verdict != AttractorVerdict.STRICT:
            raise PreconditionViolation(
                f"no uniform horizon at ε={epsilon:g} within {attractor.budget_n} iterations ({finer.verdict.value})"
            )
        return finer

    def _shifted_window(self, w: SymbolWindow, sigma: Word, n: int, target: Cylinder) -> SymbolWindow:
        # agrees with ω before -n and after the cylinder's future
        return w.overwrite(-n, sigma.symbols).overwrite(0, target.pos_word)

    # ------------------------------------------------------------------
    # Skew transitivity
    # ------------------------------------------------------------------

    def _pick_witness(self, F: IfsSystem, cert: DensityCertificate, f_image: Arc, g_pull: Arc):
        for witness in cert.witnesses:
            sample = cert.seeds[witness.seed_index]
            target = cert.targets[witness.target_index]
            if f_image.interior_margin(sample) <= 0.0:
                continue
            if g_pull.contains_arc(Arc.ball(target.center, target.radius)):
                return witness, sample
        return None, None

    def skew_transitivity_check(
        self,
        F: IfsSystem,
        trans_cert: DensityCertificate,
        cylinders: Sequence[Tuple[Cylinder, Cylinder]],
        arcs: Sequence[Tuple[Arc, Arc]],
    ) -> SkewTransitivityReport:
        """Replay Φ^n(A × U) ∩ (D × V) ≠ ∅ through the composition g ∘ h ∘ f."""
        if not trans_cert.complete:
            raise PreconditionViolation("needs a complete transitivity certificate")
        if trans_cert.direction != Direction.FORWARD:
            raise PreconditionViolation("needs a forward certificate")
        if trans_cert.mode != DensityMode.TRANSITIVITY:
            logger.debug("using minimality witnesses as transitivity witnesses")

        samples: List[SkewTransitivitySample] = []
        for index, ((C, D), (U, V)) in enumerate(zip(cylinders, arcs)):
            f = Word(symbols=C.pos_word)
            g = Word(symbols=D.neg_word)
            witness, sample = self._pick_witness(F, trans_cert, self.semigroup.image_arc(F, f, U),
                                                 self.semigroup.image_arc(F, g.inverse(), V))
            if witness is None:
                samples.append(SkewTransitivitySample(index=index, verified=False,
                                                      reason="no certificate witness joins f(U) to g^-1(V)"))
                continue
            h = witness.word
            A = Cylinder(neg_word=C.neg_word, pos_word=C.pos_word + h.symbols + D.neg_word + D.pos_word)
            n = len(C.pos_word) + len(h) + len(D.neg_word)
            u = float(self.semigroup.apply_word(F, f.inverse(), sample))
            window, z = self.skew_step(F, A.window(), u, n)

            reason = ""
            if not U.closure_contains(u):
                reason = "pulled-back sample left U"
            elif not C.contains(A.window()):
                reason = "start window is not in C"
            elif not D.contains(window):
                reason = "shifted window is not in D"
            elif not V.contains(z):
                reason = "fiber point missed V"
            samples.append(SkewTransitivitySample(index=index, cylinder=A, n=n, start=u, end=z,
                                                  verified=not reason, reason=reason))
        report = SkewTransitivityReport(samples=samples)
        if report.failures:
            logger.warning("✗ skew transitivity: %d of %d samples failed", len(report.failures), len(samples))
        else:
            logger.info("✓ skew transitivity: %d samples verified", len(samples))
        return report


_skewprod_service: Optional[SkewProductService] = None


def get_skewprod_service() -> SkewProductService:
    global _skewprod_service
    if _skewprod_service is None:
        _skewprod_service = SkewProductService()
    return _skewprod_service
