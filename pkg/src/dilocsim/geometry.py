"""Planar geometry computed purely from pairwise distances.

Triangle areas come from the Cayley-Menger determinant, barycentric weights
from sub-triangle area ratios, and convex-hull membership from the
area-additivity test. Coordinates never enter the kernel: callers supply
Euclidean distances, so everything here works with relative distance
measurements alone. Coordinates appear only in scenario ground truth and
in test oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

# Degeneracy threshold, absolute, in squared-area units. Double-precision
# Cayley-Menger evaluation on O(1)-scale coordinates loses roughly 4 digits,
# so anything at or below this is treated as collinear.
AREA_SQ_EPS = 1e-12

# Relative tolerance for hull membership and for weight sums.
HULL_REL_EPS = 1e-9


class GeometryError(ValueError):
    """Base class for distance-geometry failures."""


class NegativeSquaredArea(GeometryError):
    """Distances admit no planar embedding; the inputs are corrupted."""


class DegenerateNeighborTriangle(GeometryError):
    """Reference triangle is (near-)collinear, so area ratios are undefined."""


class NotInConvexHull(GeometryError):
    """Weight sum deviates from 1: the node lies outside the triangle."""


@dataclass(frozen=True)
class Point2:
    """A point in the plane; coordinates must be finite."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


def distance(p: Point2, q: Point2) -> float:
    """Euclidean distance between two points."""
    return math.hypot(p.x - q.x, p.y - q.y)


@dataclass(frozen=True)
class TriangleDistances:
    """Side lengths of a labeled triangle a-b-c.

    Construction fails unless all sides are positive and the triangle
    inequality holds within tolerance (collinear configurations, where one
    side equals the sum of the others, are allowed).
    """

    d_ab: float
    d_bc: float
    d_ca: float

    def __post_init__(self) -> None:
        sides = (self.d_ab, self.d_bc, self.d_ca)
        for s in sides:
            if not (math.isfinite(s) and s > 0.0):
                raise ValueError(f"side lengths must be positive and finite, got {sides}")
        perimeter = sum(sides)
        if 2.0 * max(sides) > perimeter + HULL_REL_EPS * perimeter:
            raise ValueError(f"triangle inequality violated for sides {sides}")


def _squared_area(a: float, b: float, c: float) -> float:
    # Expanded 4x4 Cayley-Menger determinant for three side lengths:
    # -det/16 == S^2.
    a2, b2, c2 = a * a, b * b, c * c
    det16 = 2.0 * (a2 * b2 + b2 * c2 + c2 * a2) - (a2 * a2 + b2 * b2 + c2 * c2)
    return det16 / 16.0


def _area(a: float, b: float, c: float) -> float:
    s2 = _squared_area(a, b, c)
    if s2 < 0.0:
        if s2 < -AREA_SQ_EPS:
            raise NegativeSquaredArea(
                f"sides ({a}, {b}, {c}) yield squared area {s2}; "
                "distances are inconsistent with any planar layout"
            )
        return 0.0  # collinear up to roundoff
    return math.sqrt(s2)


def triangle_area_from_distances(d: TriangleDistances) -> float:
    """Triangle area from its three side lengths; 0 for collinear points."""
    return _area(d.d_ab, d.d_bc, d.d_ca)


@dataclass(frozen=True)
class BarycentricWeights:
    """Weights of a node with respect to three neighbors, keyed by neighbor id.

    The weights of a point inside the neighbor triangle are nonnegative and
    sum to 1; construction rejects weight vectors whose sum deviates from 1.
    """

    neighbor_ids: tuple[int, int, int]
    values: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(set(self.neighbor_ids)) != 3:
            raise ValueError(f"neighbor ids must be three distinct ids, got {self.neighbor_ids}")
        total = sum(self.values)
        if not math.isfinite(total) or abs(total - 1.0) > HULL_REL_EPS:
            raise ValueError(f"weights {self.values} sum to {total!r}, expected 1")

    def __getitem__(self, neighbor_id: int) -> float:
        return self.values[self.neighbor_ids.index(neighbor_id)]

    def items(self) -> Iterator[tuple[int, float]]:
        return zip(self.neighbor_ids, self.values)


def _reference_squared_area(d_jk: float, d_jl: float, d_kl: float) -> float:
    s2 = _squared_area(d_jk, d_kl, d_jl)
    if s2 <= AREA_SQ_EPS:
        raise DegenerateNeighborTriangle(
            f"neighbor triangle with sides ({d_jk}, {d_kl}, {d_jl}) has squared area "
            f"{s2} <= {AREA_SQ_EPS}"
        )
    return s2


def barycentric_from_distances(
    d_ij: float,
    d_ik: float,
    d_il: float,
    d_jk: float,
    d_jl: float,
    d_kl: float,
    neighbor_ids: Sequence[int] = (0, 1, 2),
) -> BarycentricWeights:
    """Barycentric weights of node i with respect to neighbors j, k, l.

    Takes the six pairwise distances among {i, j, k, l}. Each weight is the
    area of the triangle with i substituted for the corresponding neighbor,
    divided by the area of the neighbor triangle j-k-l. For i inside the
    neighbor triangle the weights are in [0, 1] and sum to 1.

    Raises DegenerateNeighborTriangle when j, k, l are (near-)collinear and
    NotInConvexHull when the weight sum deviates from 1 by more than the
    relative tolerance (callers that can tolerate exterior points should
    test with is_in_convex_hull first).
    """
    denom = math.sqrt(_reference_squared_area(d_jk, d_jl, d_kl))
    w_j = _area(d_ik, d_kl, d_il) / denom
    w_k = _area(d_il, d_jl, d_ij) / denom
    w_l = _area(d_ij, d_jk, d_ik) / denom
    total = w_j + w_k + w_l
    if abs(total - 1.0) > HULL_REL_EPS:
        raise NotInConvexHull(
            f"sub-triangle areas sum to {total} of the reference area; "
            "the node is outside the convex hull of its neighbors"
        )
    return BarycentricWeights(
        (int(neighbor_ids[0]), int(neighbor_ids[1]), int(neighbor_ids[2])),
        (w_j, w_k, w_l),
    )


def is_in_convex_hull(
    d_ij: float,
    d_ik: float,
    d_il: float,
    d_jk: float,
    d_jl: float,
    d_kl: float,
) -> bool:
    """Whether node i lies in the closed triangle spanned by j, k, l.

    Area-additivity test: the three sub-triangle areas around i must sum to
    the area of the triangle j-k-l within relative tolerance. Boundary
    points count as inside (one sub-area is then zero).
    """
    denom = math.sqrt(_reference_squared_area(d_jk, d_jl, d_kl))
    total = (
        _area(d_ik, d_kl, d_il)
        + _area(d_il, d_jl, d_ij)
        + _area(d_ij, d_jk, d_ik)
    )
    return abs(total - denom) <= HULL_REL_EPS * denom
