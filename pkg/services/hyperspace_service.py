import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import get_settings
from models.errors import BudgetExhausted, PreconditionViolation, StabilityViolation
from models.geometry import Arc, PointCloud, directed_distance
from models.schemas import (
    AttractorReport,
    AttractorVerdict,
    AttractorWitness,
    IfsSystem,
    StabilityEntry,
    StabilityReport,
    TrajectoryPoint,
)
from services.worker_pool import ordered_map

logger = logging.getLogger(__name__)


class HyperspaceService:
    """Finite δ-nets of compact sets, the Hausdorff metric and the Hutchinson operator."""

    def __init__(self):
        self.settings = get_settings()

    # ------------------------------------------------------------------
    # Clouds and metric
    # ------------------------------------------------------------------

    def cloud(self, points: Iterable[float], delta: Optional[float] = None) -> PointCloud:
        return PointCloud.from_points(points, delta or self.settings.default_delta)

    def full_circle_net(self, delta: Optional[float] = None) -> PointCloud:
        delta = delta or self.settings.default_delta
        n = int(np.ceil(1.0 / delta))
        return PointCloud.from_points(np.arange(n) / n, delta)

    def cantor_net(self, depth: int, left: float = 0.25, length: float = 0.25,
                   delta: Optional[float] = None) -> PointCloud:
        """Endpoints of the depth-n intervals of the middle-thirds construction on [left, left+length]."""
        starts = np.array([left])
        size = length
        for _ in range(depth):
            size /= 3.0
            starts = np.concatenate([starts, starts + 2.0 * size])
        points = np.concatenate([starts, starts + size])
        return PointCloud.from_points(points, delta or self.settings.default_delta)

    def hausdorff_distance(self, a: PointCloud, b: PointCloud) -> float:
        return max(directed_distance(a.points, b.points), directed_distance(b.points, a.points))

    def is_epsilon_dense(self, cloud: PointCloud, epsilon: float, net: Optional[PointCloud] = None) -> bool:
        net = net or self.full_circle_net(cloud.resolution)
        return directed_distance(net.points, cloud.points) < epsilon

    # ------------------------------------------------------------------
    # Hutchinson operator
    # ------------------------------------------------------------------

    def image_points(self, F: IfsSystem, points: np.ndarray) -> np.ndarray:
        return np.concatenate([np.atleast_1d(m(points)) for m in F.maps])

    def hutchinson_step(self, F: IfsSystem, S: PointCloud) -> PointCloud:
        return PointCloud.from_points(self.image_points(F, S.points), S.resolution)

    def iterate(self, F: IfsSystem, S: PointCloud, n: int) -> PointCloud:
        for _ in range(n):
            S = self.hutchinson_step(F, S)
        return S

    def iterate_to_attractor(
        self,
        F: IfsSystem,
        S: PointCloud,
        budget_n: int,
        target: Optional[PointCloud] = None,
        stop_when_stalled: bool = True,
    ) -> List[TrajectoryPoint]:
        """Distances of F^n(S) to ``target`` (or to F^(n-1)(S)) for n = 1..budget_n."""
        if budget_n < 1:
            raise PreconditionViolation("budget_n must be at least 1")
        trajectory: List[TrajectoryPoint] = []
        current = S
        for n in range(1, budget_n + 1):
            following = self.hutchinson_step(F, current)
            successive = self.hausdorff_distance(following, current)
            distance = self.hausdorff_distance(following, target) if target is not None else successive
            trajectory.append(TrajectoryPoint(n=n, distance=distance))
            current = following
            if stop_when_stalled and successive < S.resolution / 4:
                logger.debug("✓ iteration stalled at n=%d", n)
                return trajectory
        if stop_when_stalled:
            raise BudgetExhausted(f"no stall within {budget_n} iterations", partial=trajectory)
        return trajectory

    # ------------------------------------------------------------------
    # Probes
    # ------------------------------------------------------------------

    def _seed_orbit(self, F: IfsSystem, y: float, epsilon: float, budget_n: int,
                    net: PointCloud) -> Tuple[int, float, float, Optional[int], int]:
        """(last n with F^n({y}) not ε-dense, final distance, smallest distance,
        first ε-dense n, iterations run)."""
        cloud = PointCloud.from_points([y], net.resolution)
        last_failure = 0
        smallest = np.inf
        distance = self.hausdorff_distance(cloud, net)
        first_within = 0 if distance < epsilon else None
        n = 0
        for n in range(1, budget_n + 1):
            following = self.hutchinson_step(F, cloud)
            distance = self.hausdorff_distance(following, net)
            smallest = min(smallest, distance)
            if distance >= epsilon:
                last_failure = n
            elif first_within is None:
                first_within = n
            if following == cloud:
                # fixed cloud: every later iterate is the same
                if distance >= epsilon:
                    last_failure = budget_n
                break
            cloud = following
        return last_failure, float(distance), float(smallest), first_within, n

    def strict_attractor_probe(
        self,
        F: IfsSystem,
        epsilon: float,
        seeds: Optional[Sequence[float]] = None,
        budget_n: int = 200,
        delta: Optional[float] = None,
    ) -> AttractorReport:
        delta = delta or self.settings.default_delta
        if epsilon <= 2 * delta:
            raise PreconditionViolation(f"epsilon ({epsilon}) must exceed 2*delta ({2 * delta})")
        if seeds is None:
            count = self.settings.default_seed_count
            seeds = np.arange(count) / count
        seeds = [float(s) for s in seeds]
        net = self.full_circle_net(delta)

        runs = ordered_map(
            lambda y: self._seed_orbit(F, y, epsilon, budget_n, net),
            seeds,
            self.settings.max_workers,
        )
        witnesses = [
            AttractorWitness(seed=y, iterations=ran, first_within_epsilon=first, final_distance=final,
                             min_distance=smallest)
            for y, (_, final, smallest, first, ran) in zip(seeds, runs)
        ]

        if all(run[0] < budget_n for run in runs):
            horizon = max(run[0] for run in runs) + 1
            logger.info("✓ %s: ε=%g dense from n0=%d for %d seeds", F.label, epsilon, horizon, len(seeds))
            verdict = AttractorVerdict.STRICT
        elif any(w.min_distance >= 2 * epsilon for w in witnesses):
            horizon = None
            logger.info("✗ %s: some orbit cloud stays %g away from the circle", F.label, 2 * epsilon)
            verdict = AttractorVerdict.NOT_STRICT
        else:
            horizon = None
            verdict = AttractorVerdict.INCONCLUSIVE
        return AttractorReport(verdict=verdict, horizon_n0=horizon, epsilon=epsilon, delta=delta,
                               budget_n=budget_n, witnesses=witnesses)

    def stability_probe(
        self,
        F: IfsSystem,
        epsilon: float,
        deletion_arcs: Sequence[Arc],
        budget_n: int,
        delta: Optional[float] = None,
        strict: bool = True,
    ) -> StabilityReport:
        """Perturb the full net by deleting an arc and watch whether F^n repairs the hole."""
        net = self.full_circle_net(delta)
        entries: List[StabilityEntry] = []
        for arc in deletion_arcs:
            kept = net.points[~arc.contains(net.points)]
            if kept.size == 0:
                raise PreconditionViolation(f"deletion arc {arc} removes the whole net")
            S = PointCloud.from_points(kept, net.resolution)
            entry = StabilityEntry(arc=arc, max_distance=0.0)
            for n in range(budget_n + 1):
                distance = self.hausdorff_distance(S, net)
                entry.max_distance = max(entry.max_distance, distance)
                if distance >= epsilon:
                    if strict:
                        raise StabilityViolation(arc, n, distance)
                    entry.violation_n, entry.violation_distance = n, distance
                    break
                following = self.hutchinson_step(F, S)
                if following == S:
                    break
                S = following
            entries.append(entry)

        stable = [e.arc.length for e in entries if e.violation_n is None]
        return StabilityReport(epsilon=epsilon, budget_n=budget_n, entries=entries,
                               empirical_delta=max(stable) if stable else None)


_hyperspace_service: Optional[HyperspaceService] = None


def get_hyperspace_service() -> HyperspaceService:
    global _hyperspace_service
    if _hyperspace_service is None:
        _hyperspace_service = HyperspaceService()
    return _hyperspace_service
