from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.circle_maps import CircleMap, InverseMap
from models.geometry import Arc, CirclePoint
from models.symbolic import Cylinder, SymbolWindow


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class AttractorVerdict(str, Enum):
    STRICT = "StrictAttractorEvidence"
    NOT_STRICT = "NotStrictAttractor"
    INCONCLUSIVE = "Inconclusive"


class DensityMode(str, Enum):
    MINIMALITY = "minimality"
    TRANSITIVITY = "transitivity"


class ProbeName(str, Enum):
    ORBIT = "orbit"
    ATTRACTOR_ITERATION = "attractor-iteration"
    STRICT_ATTRACTOR = "strict-attractor"
    STABILITY = "stability"
    MINIMALITY = "minimality"
    TRANSITIVITY = "transitivity"
    EXPANDING_COVER = "expanding-cover"
    BOOTSTRAP = "bootstrap"
    BLENDING = "blending"
    TARGET_WORD = "target-word"
    GLOBALIZATION = "globalization"
    ABSORBING_DOMAIN = "absorbing-domain"
    UNSTABLE_LEAF = "unstable-leaf"
    STABLE_LEAF = "stable-leaf"
    LEAF_DENSITY = "leaf-density"
    CONJUGACY = "conjugacy"
    SKEW_TRANSITIVITY = "skew-transitivity"
    CANTOR_BRANCHES = "cantor-branches"
    H_STRICTNESS = "h-strictness"
    ONE_SIDED = "one-sided"


# ---------------------------------------------------------------------------
# Words and systems
# ---------------------------------------------------------------------------

class Word(BaseModel):
    """Symbols applied first-to-last; a backward word indexes inverse maps."""

    model_config = ConfigDict(frozen=True)

    symbols: Tuple[int, ...] = ()
    direction: Direction = Direction.FORWARD

    @field_validator("symbols")
    @classmethod
    def _positive(cls, symbols: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(s < 1 for s in symbols):
            raise ValueError("symbols are numbered from 1")
        return symbols

    @classmethod
    def identity(cls, direction: Direction = Direction.FORWARD) -> "Word":
        return cls(symbols=(), direction=direction)

    @property
    def is_identity(self) -> bool:
        return not self.symbols

    def __len__(self) -> int:
        return len(self.symbols)

    def __add__(self, other: "Word") -> "Word":
        if self.direction != other.direction and not (self.is_identity or other.is_identity):
            raise ValueError("cannot concatenate forward and backward words")
        direction = other.direction if self.is_identity else self.direction
        return Word(symbols=self.symbols + other.symbols, direction=direction)

    def inverse(self) -> "Word":
        """The word undoing this one: reversed symbols, opposite direction."""
        flipped = Direction.BACKWARD if self.direction == Direction.FORWARD else Direction.FORWARD
        return Word(symbols=tuple(reversed(self.symbols)), direction=flipped)

    def __str__(self) -> str:
        tag = "" if self.direction == Direction.FORWARD else "⁻"
        return f"{tag}[{','.join(str(s) for s in self.symbols)}]"


class IfsSystem(BaseModel):
    maps: List[CircleMap] = Field(min_length=1)
    label: str = ""

    @property
    def k(self) -> int:
        return len(self.maps)

    @property
    def invertible(self) -> bool:
        return all(m.degree == 1 for m in self.maps)

    def generator(self, symbol: int) -> CircleMap:
        return self.maps[symbol - 1]

    def check(self) -> None:
        for m in self.maps:
            m.check()

    def inverse(self) -> "IfsSystem":
        maps = [m.inner if isinstance(m, InverseMap) else InverseMap(inner=m) for m in self.maps]
        return IfsSystem(maps=maps, label=f"{self.label}^-1")

    def extended(self, extra: List[CircleMap], label: Optional[str] = None) -> "IfsSystem":
        return IfsSystem(maps=list(self.maps) + list(extra), label=label or self.label)


# ---------------------------------------------------------------------------
# Hyperspace reports
# ---------------------------------------------------------------------------

class TrajectoryPoint(BaseModel):
    n: int
    distance: float


class AttractorWitness(BaseModel):
    seed: float
    iterations: int
    # first n with F^n({seed}) ε-dense, if any
    first_within_epsilon: Optional[int] = None
    final_distance: float
    min_distance: float


class AttractorReport(BaseModel):
    verdict: AttractorVerdict
    horizon_n0: Optional[int] = None
    epsilon: float
    delta: float
    budget_n: int
    witnesses: List[AttractorWitness]

    @model_validator(mode="after")
    def _consistent(self) -> "AttractorReport":
        if self.verdict == AttractorVerdict.STRICT:
            if self.horizon_n0 is None:
                raise ValueError("strict attractor evidence needs a horizon")
            if any(w.final_distance >= self.epsilon for w in self.witnesses):
                raise ValueError("strict attractor evidence needs every final distance below epsilon")
        if self.verdict == AttractorVerdict.NOT_STRICT:
            if not any(w.min_distance >= 2 * self.epsilon for w in self.witnesses):
                raise ValueError("a non-strict verdict needs a witness stuck at 2*epsilon")
        return self


class AttractingFixedPoint(BaseModel):
    """w(point) = point with |w'(point)| = multiplier < 1."""

    word: Word
    point: float
    multiplier: float


class StabilityEntry(BaseModel):
    arc: Arc
    max_distance: float
    violation_n: Optional[int] = None
    violation_distance: Optional[float] = None


class StabilityReport(BaseModel):
    epsilon: float
    budget_n: int
    entries: List[StabilityEntry]
    empirical_delta: Optional[float] = None


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

class TargetBall(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: CirclePoint
    radius: float = Field(gt=0.0)


class DensityWitness(BaseModel):
    seed_index: int
    target_index: int
    word: Word


class DensityCertificate(BaseModel):
    epsilon: float
    mode: DensityMode = DensityMode.MINIMALITY
    direction: Direction = Direction.FORWARD
    seeds: List[float]
    seed_sources: List[int] = Field(default_factory=list)
    source_arcs: List[Arc] = Field(default_factory=list)
    targets: List[TargetBall]
    witnesses: List[DensityWitness]
    uncovered: List[Tuple[int, int]] = Field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.uncovered and len(self.witnesses) == self._expected_pairs()

    def _expected_pairs(self) -> int:
        if self.mode == DensityMode.TRANSITIVITY:
            return len(self.source_arcs) * len(self.targets)
        return len(self.seeds) * len(self.targets)


class ExpandingCover(BaseModel):
    balls: List[Arc]
    words: List[Word]
    kappa: float = Field(gt=1.0)
    margin_epsilon: float = Field(gt=0.0)
    direction: Direction = Direction.FORWARD

    @model_validator(mode="after")
    def _paired(self) -> "ExpandingCover":
        if len(self.balls) != len(self.words):
            raise ValueError("an expanding cover needs one word per ball")
        return self


class BlendingCertificate(BaseModel):
    region_B: Arc
    domain_D: Arc
    words: List[Word]
    contraction_beta: float = Field(lt=1.0)
    cover_slack: float = Field(gt=0.0)


class GlobalizationReport(BaseModel):
    region: Arc
    forward_words: List[Word]
    backward_words: List[Word]
    forward_uncovered: List[float]
    backward_uncovered: List[float]

    @property
    def passed(self) -> bool:
        return not self.forward_uncovered and not self.backward_uncovered


# ---------------------------------------------------------------------------
# Skew products
# ---------------------------------------------------------------------------

class LeafWitness(BaseModel):
    n: int
    sigma: Word
    fiber_point: float


class LeafReport(BaseModel):
    window: SymbolWindow
    x: float
    depth: int
    unstable: bool = True
    resolution: float
    projection: List[float]
    witnesses: List[LeafWitness]


class LeafDensityWitness(BaseModel):
    sigma: Word
    n: int
    fiber_point: float
    target: Cylinder
    target_arc: Arc
    shifted_window: SymbolWindow


class SkewTransitivitySample(BaseModel):
    index: int
    cylinder: Optional[Cylinder] = None
    n: Optional[int] = None
    start: Optional[float] = None
    end: Optional[float] = None
    verified: bool
    reason: str = ""


class SkewTransitivityReport(BaseModel):
    samples: List[SkewTransitivitySample]

    @property
    def failures(self) -> List[int]:
        return [s.index for s in self.samples if not s.verified]


class ConjugacyReport(BaseModel):
    trials: int
    max_discrepancy: float
    worst_trial: Optional[int] = None


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

class ExpectedVerdict(BaseModel):
    probe: ProbeName
    verdict: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    max_metric: Optional[float] = None


class NamedSystem(BaseModel):
    name: str
    system: IfsSystem
    expected: List[ExpectedVerdict] = Field(default_factory=list)
    provenance: str
    stand_in: bool = False
    related: Dict[str, IfsSystem] = Field(default_factory=dict)
    cantor_interval: Optional[Arc] = None


class CatalogEntry(BaseModel):
    name: str
    k: int
    provenance: str
    stand_in: bool
    probes: List[str]


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

class ProbeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: ProbeName
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    delta: Optional[float] = Field(default=None, gt=0.0)
    depth: Optional[int] = Field(default=None, ge=0)
    budget: Optional[int] = Field(default=None, gt=0)
    seeds: Optional[int] = Field(default=None, gt=0)
    kappa: Optional[float] = Field(default=None, gt=1.0)
    rounds: Optional[int] = Field(default=None, ge=0)
    word_depth: Optional[int] = Field(default=None, gt=0)
    grid: Optional[int] = Field(default=None, gt=1)
    trials: Optional[int] = Field(default=None, gt=0)
    magnitude: Optional[float] = Field(default=None, ge=0.0, lt=0.01)
    x: Optional[float] = None
    direction: Direction = Direction.FORWARD
    system_variant: Optional[str] = None

    @model_validator(mode="after")
    def _resolution(self) -> "ProbeSpec":
        if self.epsilon is not None and self.delta is not None and self.epsilon <= 2 * self.delta:
            raise ValueError(f"epsilon ({self.epsilon}) must exceed 2*delta ({2 * self.delta})")
        return self


class OutputSpec(BaseModel):
    report: Optional[str] = None
    clouds: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    system: Union[str, IfsSystem]
    probe: ProbeSpec
    output: OutputSpec = Field(default_factory=OutputSpec)
    rng_seed: int = 0
    expect: Optional[str] = None


class ProbeOutcome(BaseModel):
    verdict: str
    metric: Optional[float] = None
    details: Dict[str, Any] = Field(default_factory=dict)
    stand_in: bool = False
    exhausted: bool = False


class RunReport(BaseModel):
    config: RunConfig
    outcome: ProbeOutcome
    expected: Optional[str] = None
    matched: bool


class CertificateKind(str, Enum):
    DENSITY = "density"
    EXPANDING = "expanding"
    BLENDING = "blending"
    LEAF = "leaf"


class CertificateFile(BaseModel):
    kind: CertificateKind
    system: IfsSystem
    certificate: Union[DensityCertificate, ExpandingCover, BlendingCertificate, LeafReport]

    @model_validator(mode="before")
    @classmethod
    def _typed(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("certificate"), dict):
            target = {
                "density": DensityCertificate,
                "expanding": ExpandingCover,
                "blending": BlendingCertificate,
                "leaf": LeafReport,
            }.get(getattr(data.get("kind"), "value", data.get("kind")))
            if target is not None:
                data = dict(data)
                data["certificate"] = target.model_validate(data["certificate"])
        return data


class ReplayResult(BaseModel):
    kind: CertificateKind
    checked: int
    failures: List[int]

    @property
    def passed(self) -> bool:
        return not self.failures


class HealthResponse(BaseModel):
    success: Optional[str] = None
    failure: Optional[str] = None
