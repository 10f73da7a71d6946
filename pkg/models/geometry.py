"""Points, arcs and finite clouds on the circle R/Z.

Positions are plain floats in [0, 1). Arrays of positions are numpy float64
arrays; everything here is vectorised so the hyperspace code can push whole
clouds through in one call.
"""
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Union

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator
from typing_extensions import Annotated

from models.errors import PreconditionViolation

ArrayLike = Union[float, Sequence[float], np.ndarray]


def wrap(values: ArrayLike) -> np.ndarray:
    """Reduce lift coordinates mod 1 into [0, 1)."""
    arr = np.mod(np.asarray(values, dtype=float), 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(arr >= 1.0, 0.0, arr)


def wrap_scalar(value: float) -> float:
    return float(wrap(value))


def circle_distance(x: ArrayLike, y: ArrayLike) -> np.ndarray:
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return np.minimum(d, 1.0 - d)


CirclePoint = Annotated[float, AfterValidator(wrap_scalar)]


class Arc(BaseModel):
    """Half-open arc [start, start + length) on the circle."""

    model_config = ConfigDict(frozen=True)

    start: CirclePoint
    length: float = Field(gt=0.0, le=1.0)

    @classmethod
    def from_lift(cls, a: float, b: float) -> "Arc":
        """Arc swept by the lift interval [a, b] (b > a)."""
        return cls(start=a, length=min(float(b - a), 1.0))

    @classmethod
    def ball(cls, center: float, radius: float) -> "Arc":
        return cls(start=center - radius, length=min(2.0 * radius, 1.0))

    @classmethod
    def full(cls) -> "Arc":
        return cls(start=0.0, length=1.0)

    @property
    def is_full(self) -> bool:
        return self.length >= 1.0

    @property
    def end(self) -> float:
        """Lift coordinate of the right endpoint (may exceed 1)."""
        return self.start + self.length

    @property
    def midpoint(self) -> float:
        return wrap_scalar(self.start + 0.5 * self.length)

    @property
    def radius(self) -> float:
        return 0.5 * self.length

    def offset(self, x: ArrayLike) -> np.ndarray:
        return wrap(np.asarray(x, dtype=float) - self.start)

    def contains(self, x: ArrayLike) -> np.ndarray:
        if self.is_full:
            return np.ones(np.shape(x), dtype=bool)
        return self.offset(x) < self.length

    def interior_margin(self, x: ArrayLike) -> np.ndarray:
        """Distance from x to the arc boundary, negative when x lies outside."""
        if self.is_full:
            return np.full(np.shape(x), 0.5)
        off = self.offset(x)
        inside = np.minimum(off, self.length - off)
        outside = -np.minimum(off - self.length, 1.0 - off)
        return np.where(off < self.length, inside, outside)

    def closure_contains(self, x: ArrayLike, tol: float = 1e-12) -> np.ndarray:
        if self.is_full:
            return np.ones(np.shape(x), dtype=bool)
        off = self.offset(x)
        return (off <= self.length + tol) | (off >= 1.0 - tol)

    def contains_arc(self, other: "Arc", tol: float = 0.0) -> bool:
        if self.is_full:
            return True
        if other.is_full:
            return False
        off = float(self.offset(other.start))
        if off > 1.0 - tol:
            off -= 1.0
        return off >= -tol and off + other.length <= self.length + tol

    def sample(self, n: int, closed: bool = True) -> np.ndarray:
        """n equally spaced positions across the arc (endpoints included when closed)."""
        if closed:
            t = np.linspace(0.0, 1.0, n)
        else:
            t = (np.arange(n) + 0.5) / n
        return wrap(self.start + self.length * t)

    def __str__(self) -> str:
        return f"[{self.start:.6g}, {self.end:.6g})"


class ArcUnion(BaseModel):
    """Finite union of arcs, stored normalised: disjoint and sorted by start."""

    model_config = ConfigDict(frozen=True)

    arcs: List[Arc]

    @field_validator("arcs")
    @classmethod
    def _normalise(cls, arcs: List[Arc]) -> List[Arc]:
        if not arcs:
            return []
        if any(a.is_full for a in arcs):
            return [Arc.full()]
        intervals = sorted([a.start, a.end] for a in arcs)
        merged: List[List[float]] = []
        for s, e in intervals:
            if merged and s < merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        while len(merged) > 1 and merged[-1][1] > merged[0][0] + 1.0:
            _, e0 = merged.pop(0)
            merged[-1][1] = max(merged[-1][1], e0 + 1.0)
        if merged[-1][1] - merged[-1][0] >= 1.0:
            return [Arc.full()]
        return sorted((Arc.from_lift(s, e) for s, e in merged), key=lambda a: a.start)

    @property
    def total_length(self) -> float:
        return float(sum(a.length for a in self.arcs))

    @property
    def is_empty(self) -> bool:
        return not self.arcs

    @property
    def is_full(self) -> bool:
        return bool(self.arcs) and self.arcs[0].is_full

    def contains(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hit = np.zeros(x.shape, dtype=bool)
        for arc in self.arcs:
            hit |= arc.contains(x)
        return hit


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

def merge_order(values: np.ndarray, spacing: float) -> np.ndarray:
    """Indices of the representatives kept when merging ``values`` at ``spacing``.

    Values must already lie in [0, 1). The result is ordered by position and
    consecutive kept points (cyclically) are at least ``spacing`` apart. Every
    dropped value lies within ``2 * spacing`` of a kept one. Ties keep the
    earliest index, so callers that list preferred candidates first keep them.
    """
    order = np.argsort(values, kind="stable")
    pts = values[order]
    if pts.size < 2 or spacing <= 0.0:
        return order

    bins = np.floor(pts / spacing).astype(np.int64)
    kept = np.flatnonzero(np.r_[True, bins[1:] != bins[:-1]])
    q = pts[kept]
    if q.size > 1:
        close = np.diff(q) < spacing
        idx = np.arange(q.size)
        run_start = np.maximum.accumulate(np.where(np.r_[True, ~close], idx, 0))
        kept = kept[(idx - run_start) % 2 == 0]
    if kept.size > 1 and pts[kept[0]] + 1.0 - pts[kept[-1]] < spacing:
        kept = kept[:-1]
    return order[kept]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A finite δ-net standing in for a compact subset of the circle."""

    points: np.ndarray
    resolution: float

    @classmethod
    def from_points(cls, values: Iterable[float], resolution: float) -> "PointCloud":
        if not isinstance(values, np.ndarray):
            values = list(values)
        arr = np.atleast_1d(wrap(values))
        if arr.size == 0:
            raise PreconditionViolation("a point cloud must contain at least one point")
        kept = merge_order(arr, 0.5 * resolution)
        points = arr[kept]
        points.setflags(write=False)
        return cls(points=points, resolution=float(resolution))

    def __len__(self) -> int:
        return int(self.points.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash((self.resolution, self.points.tobytes()))

    def union(self, other: "PointCloud") -> "PointCloud":
        return PointCloud.from_points(np.concatenate([self.points, other.points]), self.resolution)

    def to_list(self) -> List[float]:
        return [float(p) for p in self.points]


def directed_distance(a: np.ndarray, b: np.ndarray) -> float:
    """max over a of the distance to the nearest point of sorted b.

    One merge pass: each point of a is compared with its cyclic predecessor
    and successor in b, which is where its nearest neighbour on the circle is.
    """
    idx = np.searchsorted(b, a)
    right = b[idx % b.size]
    left = b[idx - 1]
    return float(np.max(np.minimum(circle_distance(a, right), circle_distance(a, left))))


def nearest_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-point distance from a to the nearest point of sorted b."""
    idx = np.searchsorted(b, a)
    return np.minimum(circle_distance(a, b[idx % b.size]), circle_distance(a, b[idx - 1]))
