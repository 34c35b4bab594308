"""Shared oracles and generators, independent of the library internals.

Everything here works from coordinates, so these functions can validate
the distance-only code paths without sharing arithmetic with them.
"""
from __future__ import annotations

import numpy as np

from dilocsim import NetworkScenario, Point2, discover_triangulation


def shoelace_area(a, b, c) -> float:
    """Unsigned triangle area from coordinates (independent oracle)."""
    return abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) / 2.0


def signed_barycentric(p, a, b, c) -> tuple[float, float, float]:
    """Signed barycentric coordinates of p in triangle (a, b, c) via a 2x2 solve."""
    det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1])
    wa = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det
    wb = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det
    return wa, wb, 1.0 - wa - wb


def in_triangle_oracle(p, a, b, c, slack: float = 0.0) -> bool:
    """Orientation-based membership test (boundary inside up to slack)."""
    return min(signed_barycentric(p, a, b, c)) >= -slack


def pairwise(p, q) -> float:
    return float(np.hypot(p[0] - q[0], p[1] - q[1]))


def six_distances(pi, pj, pk, pl) -> tuple[float, ...]:
    """Distance arguments for the barycentric / hull kernels, in call order."""
    return (
        pairwise(pi, pj),
        pairwise(pi, pk),
        pairwise(pi, pl),
        pairwise(pj, pk),
        pairwise(pj, pl),
        pairwise(pk, pl),
    )


def random_triangle(rng, min_area: float = 1e-3, span: float = 5.0) -> np.ndarray:
    """Three random vertices with a guaranteed non-degenerate area."""
    while True:
        pts = rng.uniform(-span, span, size=(3, 2))
        if shoelace_area(pts[0], pts[1], pts[2]) > min_area:
            return pts


def interior_point(rng, tri: np.ndarray, min_weight: float = 0.02) -> np.ndarray:
    """Random point strictly inside the triangle (all weights >= min_weight)."""
    while True:
        w = rng.dirichlet((1.0, 1.0, 1.0))
        if w.min() >= min_weight:
            return w @ tri


def random_scenario(seed: int, n_total: int | None = None, gamma: float = 0.5) -> NetworkScenario:
    """Random valid scenario: non-collinear anchors, interior sensors,
    triangulation sets discovered with the expanding-radius search."""
    rng = np.random.default_rng(seed)
    if n_total is None:
        n_total = int(rng.integers(4, 31))
    anchors_xy = random_triangle(rng, min_area=4.0)
    sensors_xy = [interior_point(rng, anchors_xy, min_weight=0.05) for _ in range(n_total - 3)]
    scenario = NetworkScenario(
        anchors=tuple(
            (k + 1, Point2(float(x), float(y))) for k, (x, y) in enumerate(anchors_xy)
        ),
        sensors=tuple(
            (k + 4, Point2(float(x), float(y))) for k, (x, y) in enumerate(sensors_xy)
        ),
        triangulation=None,
        gamma=gamma,
    )
    return discover_triangulation(scenario)
