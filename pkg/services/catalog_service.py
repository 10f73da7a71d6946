import logging
import math
import warnings
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from config.settings import get_settings
from models.circle_maps import IdentityOutsideArcMap, InverseMap, RotationMap
from models.errors import InvalidSystem, PreconditionViolation
from models.geometry import Arc
from models.schemas import CatalogEntry, Direction, ExpectedVerdict, IfsSystem, NamedSystem, ProbeName
from services.circle_service import get_circle_service

logger = logging.getLogger(__name__)

GOLDEN_GAP = math.sqrt(2.0) - 1.0
CANTOR_INTERVAL = Arc(start=0.25, length=0.25)
# first-generation gap of the middle-thirds set of [1/4, 1/2]
CANTOR_GAP = Arc(start=1 / 3, length=1 / 12)
GAP_SEED = 0.375


def _expect(probe: ProbeName, verdict: str, max_metric: Optional[float] = None, **parameters) -> ExpectedVerdict:
    return ExpectedVerdict(probe=probe, verdict=verdict, parameters=parameters, max_metric=max_metric)


def _looks_rational(alpha: float, max_denominator: int = 1000) -> bool:
    if isinstance(alpha, Fraction):
        return True
    return abs(float(Fraction(alpha).limit_denominator(max_denominator)) - alpha) < 1e-12


class CatalogService:
    """Named systems wired to the verdicts the probes are expected to reproduce."""

    def __init__(self):
        self.settings = get_settings()
        self.circle = get_circle_service()
        self._builders: Dict[str, Callable[..., NamedSystem]] = {
            "single-rotation": self.make_single_rotation,
            "two-rotations": self.make_two_rotations,
            "rotation-morse-smale": self.make_rotation_morse_smale,
            "cantor-group": self.make_cantor_group_instance,
            "cantor-preserving": self.make_cantor_preserving_ifs,
        }
        self._cache: Dict[str, NamedSystem] = {}

    # ------------------------------------------------------------------
    # Rotation families
    # ------------------------------------------------------------------

    def make_single_rotation(self, alpha: float = GOLDEN_GAP) -> NamedSystem:
        system = IfsSystem(maps=[self.circle.rotation(alpha)], label="single-rotation")
        return NamedSystem(
            name="single-rotation",
            system=system,
            provenance="irrational rotation; strong unstable leaf projects to {x}",
            expected=[
                _expect(ProbeName.UNSTABLE_LEAF, "not-dense", depth=50, max_metric=1),
                _expect(ProbeName.MINIMALITY, "complete", epsilon=1e-2, seeds=64, depth=400),
                _expect(ProbeName.STRICT_ATTRACTOR, "NotStrictAttractor", epsilon=1e-2, seeds=64, budget=20),
                _expect(ProbeName.CONJUGACY, "conjugate", trials=100),
            ],
        )

    def make_two_rotations(self, alpha: float = GOLDEN_GAP, rational_offset: Tuple[int, int] = (1, 2)) -> NamedSystem:
        p, q = rational_offset
        if q < 1:
            raise InvalidSystem("the offset denominator must be at least 1")
        offset = Fraction(p, q)
        system = IfsSystem(maps=[self.circle.rotation(alpha), self.circle.rotation(alpha + float(offset))],
                           label="two-rotations")
        return NamedSystem(
            name="two-rotations",
            system=system,
            provenance="rotations by α and α + p/q: minimal, not a strict attractor",
            expected=[
                _expect(ProbeName.UNSTABLE_LEAF, "not-dense", depth=20, max_metric=offset.denominator),
                _expect(ProbeName.STRICT_ATTRACTOR, "NotStrictAttractor", epsilon=1e-2, seeds=64, budget=30),
                _expect(ProbeName.MINIMALITY, "complete", epsilon=1e-2, seeds=64, depth=400),
                _expect(ProbeName.LEAF_DENSITY, "SearchExhausted", x=0.25, epsilon=1 / 32, trials=1),
                _expect(ProbeName.SKEW_TRANSITIVITY, "verified", epsilon=1 / 16, trials=50, depth=200),
                _expect(ProbeName.CONJUGACY, "conjugate", trials=1000),
            ],
        )

    def make_rotation_morse_smale(
        self,
        alpha: float = GOLDEN_GAP,
        attractor: float = 0.25,
        repeller: float = 0.75,
        contraction: float = 0.5,
    ) -> NamedSystem:
        if not 0.0 < contraction < 1.0:
            raise InvalidSystem(f"contraction must lie in (0, 1), got {contraction!r}")
        if abs(attractor - repeller) % 1.0 < 1e-12:
            raise InvalidSystem("attractor and repeller must differ")
        if _looks_rational(alpha):
            warnings.warn(f"rotation angle {alpha!r} looks rational; minimality may fail", RuntimeWarning)
            logger.warning("✗ rational rotation angle %r", alpha)
        ms = self.circle.build_morse_smale(attractor, repeller, contraction)
        system = IfsSystem(maps=[self.circle.rotation(alpha), ms], label="rotation-morse-smale")
        backward = Direction.BACKWARD.value
        return NamedSystem(
            name="rotation-morse-smale",
            system=system,
            provenance="irrational rotation with a north-south diffeomorphism: minimal, expanding both ways",
            expected=[
                _expect(ProbeName.MINIMALITY, "complete", epsilon=1e-2, seeds=64, depth=60),
                _expect(ProbeName.MINIMALITY, "complete", epsilon=1e-2, seeds=64, depth=60, direction=backward),
                _expect(ProbeName.EXPANDING_COVER, "found", kappa=1.2, word_depth=8, grid=24),
                _expect(ProbeName.EXPANDING_COVER, "found", kappa=1.2, word_depth=8, grid=24, direction=backward),
                _expect(ProbeName.STRICT_ATTRACTOR, "StrictAttractorEvidence", max_metric=200, epsilon=1e-2, seeds=64,
                        budget=200, delta=1 / 2048),
                _expect(ProbeName.STRICT_ATTRACTOR, "StrictAttractorEvidence", epsilon=0.05, seeds=8, budget=60,
                        delta=1 / 512, system_variant="inverse"),
                _expect(ProbeName.STABILITY, "stable", epsilon=1 / 16, budget=100, delta=1 / 512),
                _expect(ProbeName.BOOTSTRAP, "verified", epsilon=0.05, kappa=1.2, rounds=5, seeds=8, grid=24,
                        word_depth=8),
                _expect(ProbeName.LEAF_DENSITY, "witnessed", trials=10, delta=1 / 512),
                _expect(ProbeName.UNSTABLE_LEAF, "dense", epsilon=0.05, depth=20, delta=1 / 512),
                _expect(ProbeName.CONJUGACY, "conjugate", trials=200),
            ],
        )

    # ------------------------------------------------------------------
    # Cantor systems
    # ------------------------------------------------------------------

    def gap_maps(self) -> Tuple[IdentityOutsideArcMap, IdentityOutsideArcMap]:
        return self.circle.build_gap_pair(CANTOR_GAP)

    def make_cantor_group_instance(self) -> NamedSystem:
        """The inverse-branch pair of the degree-two cover, with its cover, the gap maps and h alongside."""
        psi1, psi2 = self.circle.build_branch_pair()
        cover = self.circle.build_cantor_cover()
        h = self.circle.build_h()
        f, g = self.circle.build_gap_pair()
        f_gap, g_gap = self.gap_maps()
        branches = IfsSystem(maps=[psi1, psi2], label="cantor-branches")
        return NamedSystem(
            name="cantor-group",
            system=branches,
            provenance="degree-two cover whose slope-3 inverse branches generate the middle-thirds set of [1/4, 1/2]",
            cantor_interval=CANTOR_INTERVAL,
            related={
                "cover": IfsSystem(maps=[cover], label="degree-two-cover"),
                "h": IfsSystem(maps=[h], label="h"),
                "gap-normalised": IfsSystem(maps=[f, g], label="gap-pair"),
                "gap": IfsSystem(maps=[f_gap, g_gap], label="gap-pair-on-circle"),
            },
            expected=[
                _expect(ProbeName.CANTOR_BRANCHES, "converges", depth=12),
                _expect(ProbeName.ATTRACTOR_ITERATION, "converged", budget=18, depth=20, delta=1 / 4096),
                _expect(ProbeName.H_STRICTNESS, "strict", depth=12, system_variant="h"),
                _expect(ProbeName.BLENDING, "passes", system_variant="gap-normalised"),
                _expect(ProbeName.TARGET_WORD, "hit", system_variant="gap-normalised", trials=32, epsilon=1e-3),
            ],
        )

    def cantor_group_maps(self) -> List:
        """A, C, f_U and g_U with their inverses: every map preserves the middle-thirds set of J."""
        A = self.circle.build_cantor_address_map()
        C = self.circle.build_cantor_swap_map()
        f_gap, g_gap = self.gap_maps()
        base = [A, C, f_gap, g_gap]
        return base + [InverseMap(inner=m) for m in base]

    def make_cantor_preserving_ifs(self) -> NamedSystem:
        maps = self.cantor_group_maps()
        system = IfsSystem(maps=maps, label="cantor-preserving")
        with_h = system.extended([self.circle.build_h()], label="cantor-preserving+h")
        return NamedSystem(
            name="cantor-preserving",
            system=system,
            provenance="STAND-IN: translation and address-rewriting maps of a Cantor set plus gap blenders",
            stand_in=True,
            cantor_interval=CANTOR_INTERVAL,
            related={"with_h": with_h},
            expected=[
                _expect(ProbeName.STABLE_LEAF, "cantor-confined", x=0.25, depth=12, delta=1 / 1024, trials=20),
                _expect(ProbeName.UNSTABLE_LEAF, "cantor-confined", x=0.25, depth=12, delta=1 / 1024, trials=20),
                _expect(ProbeName.ORBIT, "dense", x=GAP_SEED, epsilon=1 / 32, depth=30, delta=1 / 1024),
                _expect(ProbeName.UNSTABLE_LEAF, "dense", x=GAP_SEED, epsilon=1 / 32, depth=16, delta=1 / 1024,
                        system_variant="with_h"),
                _expect(ProbeName.ONE_SIDED, "forward-only", x=0.25, depth=8, delta=1 / 1024,
                        system_variant="with_h"),
                _expect(ProbeName.H_STRICTNESS, "strict", depth=12, system_variant="with_h"),
            ],
        )

    def pad_with_identity(self, named: NamedSystem, k_target: int) -> NamedSystem:
        """Append identity generators up to k_target maps."""
        k = named.system.k
        if k_target < k:
            raise PreconditionViolation(f"cannot pad a system of {k} maps down to {k_target}")
        if k_target == k:
            return named
        padding = [RotationMap(angle=0) for _ in range(k_target - k)]
        system = named.system.extended(padding, label=f"{named.system.label}+id{k_target - k}")
        return named.model_copy(update={"system": system, "name": f"{named.name}+id"})

    # ------------------------------------------------------------------
    # Registry
    # ------------------------------------------------------------------

    def names(self) -> List[str]:
        return list(self._builders)

    def get(self, name: str, **overrides) -> NamedSystem:
        builder = self._builders.get(name)
        if builder is None:
            raise InvalidSystem(f"unknown catalog system {name!r}; known: {', '.join(self._builders)}")
        if overrides:
            return builder(**overrides)
        if name not in self._cache:
            self._cache[name] = builder()
            logger.info("✓ built catalog system %s (k=%d)", name, self._cache[name].system.k)
        return self._cache[name]

    def list_entries(self) -> List[CatalogEntry]:
        entries = []
        for name in self._builders:
            named = self.get(name)
            entries.append(CatalogEntry(
                name=name,
                k=named.system.k,
                provenance=named.provenance,
                stand_in=named.stand_in,
                probes=sorted({e.probe.value for e in named.expected}),
            ))
        return entries


_catalog_service: Optional[CatalogService] = None


def get_catalog_service() -> CatalogService:
    global _catalog_service
    if _catalog_service is None:
        _catalog_service = CatalogService()
    return _catalog_service
