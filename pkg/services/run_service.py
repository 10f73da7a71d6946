import logging
import time
from enum import IntEnum
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config.settings import get_settings
from models.errors import (
    BudgetExhausted,
    CircleIfsError,
    CoverFails,
    InvalidSystem,
    NoBranch,
    NotContracting,
    PreconditionViolation,
)
from models.geometry import Arc, ArcUnion, PointCloud, directed_distance, nearest_distances, wrap
from models.schemas import (
    BlendingCertificate,
    CertificateFile,
    CertificateKind,
    Direction,
    ExpectedVerdict,
    IfsSystem,
    NamedSystem,
    ProbeName,
    ProbeOutcome,
    ProbeSpec,
    RunConfig,
    RunReport,
    Word,
)
from models.symbolic import Cylinder, SymbolWindow
from services.catalog_service import get_catalog_service
from services.hyperspace_service import get_hyperspace_service
from services.semigroup_service import get_semigroup_service
from services.skewprod_service import get_skewprod_service

logger = logging.getLogger(__name__)

CATALOG_PREFIX = "catalog:"
NUMERIC_PARAMETERS = (
    "epsilon", "delta", "depth", "budget", "seeds", "kappa", "rounds",
    "word_depth", "grid", "trials", "magnitude", "x",
)
BLEND_REGION = Arc(start=0.35, length=0.3)
BLEND_DOMAIN = Arc(start=1 / 3, length=1 / 3)
CANTOR_CONFINED = 0.02
CANTOR_ESCAPE = 0.05


class ExitCode(IntEnum):
    EXPECTED = 0
    UNEXPECTED = 1
    BUDGET = 2
    INPUT = 3


class ProbeResult(NamedTuple):
    outcome: ProbeOutcome
    clouds: Dict[str, np.ndarray]
    certificate: Optional[CertificateFile] = None


class TimedRun(NamedTuple):
    report: RunReport
    clouds: Dict[str, np.ndarray]
    certificate: Optional[CertificateFile]
    elapsed: float


class ProbeContext(NamedTuple):
    system: IfsSystem
    named: Optional[NamedSystem]
    spec: ProbeSpec
    rng: np.random.Generator
    rng_seed: int


def _pick(value, default):
    return default if value is None else value


def exit_code(report: RunReport) -> ExitCode:
    if report.expected is None:
        return ExitCode.BUDGET if report.outcome.exhausted else ExitCode.EXPECTED
    if report.matched:
        return ExitCode.EXPECTED
    return ExitCode.BUDGET if report.outcome.exhausted else ExitCode.UNEXPECTED


class RunService:
    """Resolves a RunConfig to a system, runs the named probe and scores the verdict."""

    def __init__(self):
        self.settings = get_settings()
        self.catalog = get_catalog_service()
        self.hyperspace = get_hyperspace_service()
        self.semigroup = get_semigroup_service()
        self.skewprod = get_skewprod_service()
        self._probes: Dict[ProbeName, Callable[[ProbeContext], ProbeResult]] = {
            ProbeName.ORBIT: self._orbit,
            ProbeName.ATTRACTOR_ITERATION: self._attractor_iteration,
            ProbeName.STRICT_ATTRACTOR: self._strict_attractor,
            ProbeName.STABILITY: self._stability,
            ProbeName.MINIMALITY: self._minimality,
            ProbeName.TRANSITIVITY: self._transitivity,
            ProbeName.EXPANDING_COVER: self._expanding_cover,
            ProbeName.BOOTSTRAP: self._bootstrap,
            ProbeName.BLENDING: self._blending,
            ProbeName.TARGET_WORD: self._target_word,
            ProbeName.GLOBALIZATION: self._globalization,
            ProbeName.ABSORBING_DOMAIN: self._absorbing_domain,
            ProbeName.UNSTABLE_LEAF: self._unstable_leaf,
            ProbeName.STABLE_LEAF: self._stable_leaf,
            ProbeName.LEAF_DENSITY: self._leaf_density,
            ProbeName.CONJUGACY: self._conjugacy,
            ProbeName.SKEW_TRANSITIVITY: self._skew_transitivity,
            ProbeName.CANTOR_BRANCHES: self._cantor_branches,
            ProbeName.H_STRICTNESS: self._h_strictness,
            ProbeName.ONE_SIDED: self._one_sided,
        }

    # ------------------------------------------------------------------
    # Resolution
    # ------------------------------------------------------------------

    def resolve(self, config: RunConfig) -> Tuple[IfsSystem, Optional[NamedSystem]]:
        """The system the probe acts on, after variant selection and perturbation."""
        named = None
        if isinstance(config.system, str):
            name = config.system[len(CATALOG_PREFIX):] if config.system.startswith(CATALOG_PREFIX) else config.system
            named = self.catalog.get(name)
            system = named.system
        else:
            system = config.system
            system.check()

        variant = config.probe.system_variant
        if variant == "inverse":
            system = system.inverse()
        elif variant is not None:
            if named is None or variant not in named.related:
                known = ", ".join(["inverse", *(named.related if named else [])])
                raise InvalidSystem(f"unknown system variant {variant!r}; known: {known}")
            system = named.related[variant]

        if config.probe.magnitude:
            system = self.semigroup.perturb_system(system, config.probe.magnitude, config.rng_seed)
        return system, named

    def expectation(self, config: RunConfig, named: Optional[NamedSystem]) -> Optional[ExpectedVerdict]:
        if config.expect is not None:
            return ExpectedVerdict(probe=config.probe.name, verdict=config.expect)
        if named is None:
            return None
        for entry in named.expected:
            if entry.probe != config.probe.name:
                continue
            if entry.parameters.get("system_variant") != config.probe.system_variant:
                continue
            if entry.parameters.get("direction", "forward") != config.probe.direction.value:
                continue
            return entry
        return None

    def catalog_configs(self, name: str, rng_seed: int = 0) -> List[RunConfig]:
        """One RunConfig per expected verdict recorded for a catalog system."""
        named = self.catalog.get(name)
        return [
            RunConfig(system=f"{CATALOG_PREFIX}{name}", probe=ProbeSpec(name=entry.probe, **entry.parameters),
                      rng_seed=rng_seed)
            for entry in named.expected
        ]

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def execute(self, config: RunConfig) -> TimedRun:
        """Run one probe. Input errors propagate; search and budget failures become verdicts."""
        system, named = self.resolve(config)
        expected = self.expectation(config, named)
        stream = np.random.SeedSequence(config.rng_seed).spawn(1)[0]
        context = ProbeContext(system=system, named=named, spec=config.probe,
                               rng=np.random.default_rng(stream), rng_seed=config.rng_seed)

        started = time.perf_counter()
        try:
            result = self._probes[config.probe.name](context)
        except BudgetExhausted as e:
            logger.warning("✗ %s on %s: %s", config.probe.name.value, system.label, e)
            result = ProbeResult(ProbeOutcome(verdict=type(e).__name__, details={"message": str(e)},
                                              exhausted=True), {})
        except (InvalidSystem, PreconditionViolation):
            raise
        except CircleIfsError as e:
            logger.warning("✗ %s on %s: %s", config.probe.name.value, system.label, e)
            result = ProbeResult(ProbeOutcome(verdict=type(e).__name__, details={"message": str(e)}), {})
        elapsed = time.perf_counter() - started

        outcome = result.outcome
        if named is not None and named.stand_in:
            outcome = outcome.model_copy(update={"stand_in": True})
        matched = False
        if expected is not None:
            matched = outcome.verdict == expected.verdict and (
                expected.max_metric is None or (outcome.metric is not None and outcome.metric <= expected.max_metric)
            )
        report = RunReport(config=config, outcome=outcome,
                           expected=expected.verdict if expected else None, matched=matched)
        marker = "✓" if matched or expected is None else "✗"
        logger.info("%s %s on %s: %s (expected %s) in %.2fs", marker, config.probe.name.value, system.label,
                    outcome.verdict, report.expected, elapsed)
        return TimedRun(report=report, clouds=result.clouds, certificate=result.certificate, elapsed=elapsed)

    def sweep(self, config: RunConfig, parameter: str, values: Sequence[float]) -> List[Tuple[float, TimedRun]]:
        if parameter not in NUMERIC_PARAMETERS:
            raise PreconditionViolation(f"cannot sweep {parameter!r}; numeric parameters: {', '.join(NUMERIC_PARAMETERS)}")
        if not values:
            raise PreconditionViolation("a sweep needs at least one value")
        runs = []
        for value in values:
            probe = ProbeSpec.model_validate({**config.probe.model_dump(), parameter: value})
            runs.append((value, self.execute(config.model_copy(update={"probe": probe}))))
        return runs

    # ------------------------------------------------------------------
    # Hyperspace probes
    # ------------------------------------------------------------------

    def _cantor_net(self, ctx: ProbeContext, depth: Optional[int] = None) -> PointCloud:
        J = ctx.named.cantor_interval if ctx.named and ctx.named.cantor_interval else None
        if J is None:
            raise InvalidSystem(f"{ctx.system.label or 'system'} has no Cantor interval")
        return self.hyperspace.cantor_net(_pick(depth, self.settings.cantor_depth), J.start, J.length,
                                          _pick(ctx.spec.delta, self.settings.default_delta))

    def _orbit(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        delta = _pick(spec.delta, self.settings.default_delta)
        epsilon = _pick(spec.epsilon, 0.05)
        start = self.hyperspace.cloud([_pick(spec.x, 0.0)], delta)
        orbit = self.semigroup.orbit_bfs(ctx.system, start, _pick(spec.depth, 20), delta, spec.direction)
        dense = self.hyperspace.is_epsilon_dense(orbit, epsilon)
        gap = directed_distance(self.hyperspace.full_circle_net(delta).points, orbit.points)
        return ProbeResult(
            ProbeOutcome(verdict="dense" if dense else "not-dense", metric=len(orbit),
                         details={"covering_radius": gap}),
            {"orbit": orbit.points},
        )

    def _attractor_iteration(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        delta = _pick(spec.delta, self.settings.default_delta)
        budget = _pick(spec.budget, 18)
        J = ctx.named.cantor_interval if ctx.named else None
        if J is not None:
            target = self._cantor_net(ctx, _pick(spec.depth, 20))
            start = self.hyperspace.cloud([J.start, J.end], delta)
            trajectory = self.hyperspace.iterate_to_attractor(ctx.system, start, budget, target,
                                                              stop_when_stalled=False)
            # d_H(F^n(S), K) ≤ 3^-n |J| + 2δ
            late = [p.n for p in trajectory if p.distance > J.length * 3.0 ** -p.n + 2 * delta]
            converged = not late
            details = {"late": late}
        else:
            start = self.hyperspace.cloud([_pick(spec.x, 0.0)], delta)
            trajectory = self.hyperspace.iterate_to_attractor(ctx.system, start, budget, stop_when_stalled=False)
            converged = trajectory[-1].distance < _pick(spec.epsilon, 0.05)
            details = {}
        details["trajectory"] = [p.model_dump() for p in trajectory]
        return ProbeResult(
            ProbeOutcome(verdict="converged" if converged else "not-converged",
                         metric=trajectory[-1].distance, details=details),
            {},
        )

    def _strict_attractor(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        count = _pick(spec.seeds, self.settings.default_seed_count)
        report = self.hyperspace.strict_attractor_probe(ctx.system, _pick(spec.epsilon, 0.05),
                                                        seeds=np.arange(count) / count,
                                                        budget_n=_pick(spec.budget, 200), delta=spec.delta)
        details = report.model_dump(mode="json")
        # a word with an attracting fixed point, together with minimality, predicts strictness
        attracting = self.semigroup.find_attracting_word(ctx.system, _pick(spec.word_depth, 4))
        details["attracting_word"] = attracting.model_dump(mode="json") if attracting else None
        return ProbeResult(ProbeOutcome(verdict=report.verdict.value, metric=report.horizon_n0, details=details), {})

    def _stability(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        centre = _pick(spec.x, 0.5)
        arcs = [Arc.ball(centre, length / 2) for length in (1 / 128, 1 / 64, 1 / 32)]
        report = self.hyperspace.stability_probe(ctx.system, _pick(spec.epsilon, 1 / 16), arcs,
                                                 _pick(spec.budget, 100), spec.delta, strict=False)
        stable = all(e.violation_n is None for e in report.entries)
        return ProbeResult(ProbeOutcome(verdict="stable" if stable else "unstable", metric=report.empirical_delta,
                                        details=report.model_dump(mode="json")), {})

    # ------------------------------------------------------------------
    # Semigroup probes
    # ------------------------------------------------------------------

    def _density_outcome(self, ctx: ProbeContext, cert) -> ProbeResult:
        replay = self.semigroup.verify_density_certificate(ctx.system, cert)
        longest = max((len(w.word) for w in cert.witnesses), default=0)
        verdict = "complete" if replay.passed else "replay-failed"
        return ProbeResult(
            ProbeOutcome(verdict=verdict, metric=longest,
                         details={"witnesses": len(cert.witnesses), "targets": len(cert.targets),
                                  "replay_failures": replay.failures}),
            {},
            CertificateFile(kind=CertificateKind.DENSITY, system=ctx.system, certificate=cert),
        )

    def _minimality(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        cert = self.semigroup.certify_minimality(ctx.system, _pick(spec.epsilon, 0.05), spec.seeds,
                                                 _pick(spec.depth, 50), spec.direction, spec.delta)
        return self._density_outcome(ctx, cert)

    def _transitivity(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        cert = self.semigroup.certify_transitivity(ctx.system, _pick(spec.epsilon, 0.05), spec.seeds,
                                                   _pick(spec.depth, 50), spec.direction, spec.delta)
        return self._density_outcome(ctx, cert)

    def _search_cover(self, ctx: ProbeContext, margin: Optional[float]):
        spec = ctx.spec
        return self.semigroup.search_expanding_cover(ctx.system, _pick(spec.kappa, 1.2), _pick(spec.word_depth, 8),
                                                     _pick(spec.grid, 24), margin, spec.direction)

    def _expanding_cover(self, ctx: ProbeContext) -> ProbeResult:
        cover = self._search_cover(ctx, ctx.spec.epsilon)
        replay = self.semigroup.verify_expanding_cover(ctx.system, cover)
        return ProbeResult(
            ProbeOutcome(verdict="found" if replay.passed else "replay-failed",
                         metric=self.semigroup.measure_cover_kappa(ctx.system, cover),
                         details={"words": [str(w) for w in cover.words], "replay_failures": replay.failures}),
            {},
            CertificateFile(kind=CertificateKind.EXPANDING, system=ctx.system, certificate=cover),
        )

    def _bootstrap(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        epsilon = _pick(spec.epsilon, 0.05)
        cert = self.semigroup.certify_minimality(ctx.system, epsilon, spec.seeds, _pick(spec.depth, 60),
                                                 spec.direction)
        cover = self._search_cover(ctx, epsilon)
        refined = self.semigroup.bootstrap_density(ctx.system, cover, cert, _pick(spec.rounds, 5))
        replay = self.semigroup.verify_density_certificate(ctx.system, refined)

        # the refined balls must still cover the circle
        centres = np.sort(wrap([t.center for t in refined.targets]))
        radius = min(t.radius for t in refined.targets)
        probe_points = np.arange(int(np.ceil(4.0 / radius))) * radius / 4.0
        gap = float(np.max(nearest_distances(probe_points, centres)))
        covered = gap <= radius + self.settings.tol_inv

        # independent direct check at the refined ε on a staggered grid, no witnesses reused
        try:
            fresh = self.semigroup.certify_minimality(ctx.system, refined.epsilon, spec.seeds, _pick(spec.depth, 60),
                                                      spec.direction, grid_offset=0.5)
            recheck_failures = len(self.semigroup.verify_density_certificate(ctx.system, fresh).failures)
        except BudgetExhausted as e:
            recheck_failures = len(e.partial.uncovered)

        if not replay.passed:
            verdict = "replay-failed"
        elif not covered:
            verdict = "gap"
        elif recheck_failures:
            verdict = "recheck-failed"
        else:
            verdict = "verified"
        return ProbeResult(
            ProbeOutcome(verdict=verdict, metric=refined.epsilon,
                         details={"start_epsilon": epsilon, "targets": len(refined.targets),
                                  "witnesses": len(refined.witnesses), "covering_radius": gap,
                                  "replay_failures": replay.failures, "recheck_failures": recheck_failures}),
            {"targets": centres},
            CertificateFile(kind=CertificateKind.DENSITY, system=ctx.system, certificate=refined),
        )

    def _blend(self, ctx: ProbeContext) -> BlendingCertificate:
        words = [Word(symbols=(i,)) for i in range(1, ctx.system.k + 1)]
        return self.semigroup.verify_blending(ctx.system, BLEND_REGION, BLEND_DOMAIN, words,
                                              _pick(ctx.spec.grid, 1000))

    def _blending(self, ctx: ProbeContext) -> ProbeResult:
        try:
            blend = self._blend(ctx)
        except (CoverFails, NotContracting) as e:
            return ProbeResult(ProbeOutcome(verdict="fails", details={"reason": str(e)}), {})
        return ProbeResult(
            ProbeOutcome(verdict="passes", metric=blend.contraction_beta,
                         details={"cover_slack": blend.cover_slack}),
            {},
            CertificateFile(kind=CertificateKind.BLENDING, system=ctx.system, certificate=blend),
        )

    def _target_word(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        blend = self._blend(ctx)
        tol = _pick(spec.epsilon, 1e-3)
        B = blend.region_B
        targets = wrap(B.start + B.length * ctx.rng.uniform(size=_pick(spec.trials, 32)))
        lengths, misses = [], []
        for i, target in enumerate(targets):
            try:
                word = self.semigroup.target_word_search(ctx.system, blend, float(target), tol,
                                                         _pick(spec.budget, 200))
            except (NoBranch, BudgetExhausted) as e:
                logger.debug("target %d missed: %s", i, e)
                misses.append(i)
                continue
            lengths.append(len(word))
        return ProbeResult(
            ProbeOutcome(verdict="missed" if misses else "hit", metric=max(lengths, default=None),
                         details={"targets": len(targets), "misses": misses, "tol": tol}),
            {"targets": targets},
        )

    def _globalization(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        region = Arc.ball(_pick(spec.x, 0.5), _pick(spec.epsilon, 0.1))
        report = self.semigroup.search_globalization(ctx.system, region, _pick(spec.word_depth, 6),
                                                     _pick(spec.grid, 1000))
        return ProbeResult(
            ProbeOutcome(verdict="globalized" if report.passed else "not-globalized",
                         metric=len(report.forward_words) + len(report.backward_words),
                         details=report.model_dump(mode="json")),
            {},
        )

    def _absorbing_domain(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        domain = ArcUnion(arcs=[Arc.ball(_pick(spec.x, 0.25), _pick(spec.epsilon, 0.1))])
        absorbing = self.semigroup.check_absorbing_domain(ctx.system, domain)
        return ProbeResult(ProbeOutcome(verdict="absorbing" if absorbing else "not-absorbing",
                                        details={"domain": domain.model_dump(mode="json")}), {})

    # ------------------------------------------------------------------
    # Skew-product probes
    # ------------------------------------------------------------------

    def _leaf_outcome(self, ctx: ProbeContext, unstable: bool) -> ProbeResult:
        spec = ctx.spec
        project = self.skewprod.unstable_leaf_projection if unstable else self.skewprod.stable_leaf_projection
        windows = [SymbolWindow.constant(1)]
        windows += [self.skewprod.random_window(ctx.rng, ctx.system.k) for _ in range(_pick(spec.trials, 1) - 1)]
        K = self._cantor_net(ctx) if ctx.named is not None and ctx.named.cantor_interval is not None else None

        reports, clouds, dense, to_cantor = [], [], [], []
        for w in windows:
            report = project(ctx.system, w, _pick(spec.x, 0.0), _pick(spec.depth, 20), spec.delta)
            cloud = self.skewprod.projection_cloud(report)
            reports.append(report)
            clouds.append(cloud)
            dense.append(self.hyperspace.is_epsilon_dense(cloud, _pick(spec.epsilon, 1 / 32)))
            if K is not None:
                to_cantor.append(self.hyperspace.hausdorff_distance(cloud, K))

        if all(dense):
            verdict = "dense"
        elif to_cantor and max(to_cantor) <= CANTOR_CONFINED:
            verdict = "cantor-confined"
        else:
            verdict = "not-dense"
        failures = [i for report in reports for i in self.skewprod.verify_leaf_report(ctx.system, report)]
        return ProbeResult(
            ProbeOutcome(verdict=verdict, metric=max(len(r.projection) for r in reports),
                         details={"windows": len(windows), "dense": dense, "hausdorff_to_cantor": to_cantor,
                                  "projection": reports[0].projection, "replay_failures": failures}),
            {"projection": clouds[0].points},
            CertificateFile(kind=CertificateKind.LEAF, system=ctx.system, certificate=reports[0]),
        )

    def _unstable_leaf(self, ctx: ProbeContext) -> ProbeResult:
        return self._leaf_outcome(ctx, unstable=True)

    def _stable_leaf(self, ctx: ProbeContext) -> ProbeResult:
        return self._leaf_outcome(ctx, unstable=False)

    def _random_cylinder(self, rng: np.random.Generator, k: int, longest: int) -> Cylinder:
        neg = tuple(int(s) for s in rng.integers(1, k + 1, size=int(rng.integers(0, longest + 1))))
        pos = tuple(int(s) for s in rng.integers(1, k + 1, size=int(rng.integers(0, longest + 1))))
        return Cylinder(neg_word=neg, pos_word=pos)

    def _leaf_density(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        F = ctx.system
        attractor = self.hyperspace.strict_attractor_probe(F, 0.05, seeds=np.arange(8) / 8,
                                                           budget_n=_pick(spec.budget, 200), delta=spec.delta)
        if spec.x is not None:
            # fixed fiber point 0 aimed at a ball around x
            trials = [(SymbolWindow.constant(1), 0.0, Cylinder(), Arc.ball(spec.x, _pick(spec.epsilon, 1 / 32)))]
        else:
            trials = [
                (self.skewprod.random_window(ctx.rng, F.k), float(ctx.rng.uniform()),
                 self._random_cylinder(ctx.rng, F.k, 3), Arc(start=float(ctx.rng.uniform()), length=1 / 16))
                for _ in range(_pick(spec.trials, 10))
            ]
        lengths = []
        for w, x, target, arc in trials:
            witness = self.skewprod.leaf_density_certify(F, attractor, w, x, target, arc,
                                                         budget=spec.depth, prune_delta=spec.delta)
            lengths.append(len(witness.sigma))
        return ProbeResult(
            ProbeOutcome(verdict="witnessed", metric=max(lengths),
                         details={"trials": len(trials), "horizon": attractor.horizon_n0,
                                  "attractor": attractor.verdict.value}),
            {},
        )

    def _conjugacy(self, ctx: ProbeContext) -> ProbeResult:
        report = self.skewprod.conjugacy_check(ctx.system, _pick(ctx.spec.trials, 1000), ctx.rng_seed,
                                               _pick(ctx.spec.depth, 20))
        conjugate = report.max_discrepancy <= 10 * self.settings.tol_inv
        return ProbeResult(ProbeOutcome(verdict="conjugate" if conjugate else "discrepant",
                                        metric=report.max_discrepancy, details=report.model_dump(mode="json")), {})

    def _skew_transitivity(self, ctx: ProbeContext) -> ProbeResult:
        spec = ctx.spec
        F = ctx.system
        cert = self.semigroup.certify_minimality(F, _pick(spec.epsilon, 1 / 16), _pick(spec.seeds, 64),
                                                 _pick(spec.depth, 200))
        trans = self.semigroup.transitivity_from_minimality(cert)
        count = _pick(spec.trials, 50)
        cylinders = [(self._random_cylinder(ctx.rng, F.k, 2), self._random_cylinder(ctx.rng, F.k, 2))
                     for _ in range(count)]
        arcs = [(Arc(start=float(ctx.rng.uniform()), length=1 / 8), Arc(start=float(ctx.rng.uniform()), length=1 / 8))
                for _ in range(count)]
        report = self.skewprod.skew_transitivity_check(F, trans, cylinders, arcs)
        return ProbeResult(
            ProbeOutcome(verdict="failed" if report.failures else "verified", metric=len(report.failures),
                         details=report.model_dump(mode="json")),
            {},
        )

    # ------------------------------------------------------------------
    # Cantor probes
    # ------------------------------------------------------------------

    def _cantor_branches(self, ctx: ProbeContext) -> ProbeResult:
        """d_H(F(K_n), K_{n+1}) stays within δ at every depth."""
        delta = _pick(ctx.spec.delta, self.settings.default_delta)
        distances = []
        current = self._cantor_net(ctx, 1)
        for n in range(1, _pick(ctx.spec.depth, self.settings.cantor_depth) + 1):
            following = self._cantor_net(ctx, n + 1)
            image = self.hyperspace.hutchinson_step(ctx.system, current)
            distances.append(self.hyperspace.hausdorff_distance(image, following))
            current = following
        worst = max(distances)
        return ProbeResult(
            ProbeOutcome(verdict="converges" if worst <= delta + 1e-12 else "diverges", metric=worst,
                         details={"distances": distances}),
            {"cantor": current.points},
        )

    def _h_strictness(self, ctx: ProbeContext) -> ProbeResult:
        """K ⊂ F(K) within δ, with a point of F(K) well away from K."""
        delta = _pick(ctx.spec.delta, self.settings.default_delta)
        K = self._cantor_net(ctx, ctx.spec.depth)
        image = self.hyperspace.hutchinson_step(ctx.system, K)
        containment = directed_distance(K.points, image.points)
        escape = directed_distance(image.points, K.points)
        strict = containment <= delta and escape >= CANTOR_ESCAPE
        return ProbeResult(
            ProbeOutcome(verdict="strict" if strict else "not-strict", metric=escape,
                         details={"containment": containment, "escape": escape}),
            {"image": image.points},
        )

    def _one_sided(self, ctx: ProbeContext) -> ProbeResult:
        """Forward orbit of a Cantor point leaves K while the backward orbit stays in it."""
        spec = ctx.spec
        delta = _pick(spec.delta, self.settings.default_delta)
        K = self._cantor_net(ctx)
        start = self.hyperspace.cloud([_pick(spec.x, 0.25)], delta)
        depth = _pick(spec.depth, 8)
        forward = self.semigroup.orbit_escape(ctx.system, start, K, depth, delta)
        backward = self.semigroup.orbit_escape(ctx.system, start, K, depth, delta, Direction.BACKWARD)
        escapes = (forward >= CANTOR_ESCAPE, backward >= CANTOR_ESCAPE)
        confined = (forward <= CANTOR_CONFINED, backward <= CANTOR_CONFINED)
        if escapes[0] and confined[1]:
            verdict = "forward-only"
        elif escapes[1] and confined[0]:
            verdict = "backward-only"
        elif all(confined):
            verdict = "confined"
        else:
            verdict = "mixed"
        return ProbeResult(ProbeOutcome(verdict=verdict, metric=forward,
                                        details={"forward_escape": forward, "backward_escape": backward}), {})


_run_service: Optional[RunService] = None


def get_run_service() -> RunService:
    global _run_service
    if _run_service is None:
        _run_service = RunService()
    return _run_service
