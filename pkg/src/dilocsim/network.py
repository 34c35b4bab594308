"""Sensor-network scenarios and their row-stochastic system matrices.

A scenario holds three anchors with known positions and any number of
sensors with ground-truth positions (used to synthesize distance
measurements and to validate results). Each sensor needs a triangulation
set: three neighbors whose convex hull contains it. Sets can be pinned in
the scenario file or discovered with an expanding-radius search.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .geometry import (
    DegenerateNeighborTriangle,
    Point2,
    barycentric_from_distances,
    distance,
    is_in_convex_hull,
    _reference_squared_area,
)

ANCHOR_IDS = (1, 2, 3)

# Tolerance on matrix row sums ([F H] rows must sum to 1).
ROW_SUM_TOL = 1e-9


class ScenarioError(ValueError):
    """Scenario construction or file problem; the message names the field."""


class InvalidTriangulation(ScenarioError):
    """A pinned or derived triangulation set violates the hull requirement."""


class NoTriangulationFound(ScenarioError):
    """The expanding-radius search exhausted the network without success."""


class UnreachableSensor(ScenarioError):
    """Some sensor has no directed path from any anchor."""


def _hull_distances(pi: Point2, pj: Point2, pk: Point2, pl: Point2) -> tuple[float, ...]:
    return (
        distance(pi, pj),
        distance(pi, pk),
        distance(pi, pl),
        distance(pj, pk),
        distance(pj, pl),
        distance(pk, pl),
    )


@dataclass(frozen=True)
class NetworkScenario:
    """Anchors, sensors, optional triangulation sets, and the gain parameter.

    Anchors have ids 1..3 and must not be collinear; sensors have
    consecutive ids 4..n and must lie in the anchors' convex hull. The gain
    must lie in (0, 1); gain 1 is accepted only with allow_unit_gamma, for
    replicating the classic unit-gain iteration.
    """

    anchors: tuple[tuple[int, Point2], ...]
    sensors: tuple[tuple[int, Point2], ...]
    triangulation: Mapping[int, tuple[int, int, int]] | None
    gamma: float
    initial_estimates: Mapping[int, Point2] | None = None
    allow_unit_gamma: bool = False

    def __post_init__(self) -> None:
        if tuple(i for i, _ in self.anchors) != ANCHOR_IDS:
            raise ScenarioError(
                f"anchors: ids must be exactly {list(ANCHOR_IDS)} in order, "
                f"got {[i for i, _ in self.anchors]}"
            )
        n = 3 + len(self.sensors)
        if not self.sensors:
            raise ScenarioError("sensors: at least one sensor is required")
        if tuple(i for i, _ in self.sensors) != tuple(range(4, n + 1)):
            raise ScenarioError(
                f"sensors: ids must be consecutive 4..{n}, got {[i for i, _ in self.sensors]}"
            )
        if not math.isfinite(self.gamma):
            raise ScenarioError(f"gamma: must be finite, got {self.gamma!r}")
        if not (0.0 < self.gamma < 1.0 or (self.gamma == 1.0 and self.allow_unit_gamma)):
            raise ScenarioError(
                f"gamma: must lie in (0, 1), got {self.gamma} "
                "(gamma = 1 requires allow_unit_gamma)"
            )
        pa1, pa2, pa3 = (p for _, p in self.anchors)
        d12, d23, d13 = distance(pa1, pa2), distance(pa2, pa3), distance(pa1, pa3)
        try:
            _reference_squared_area(d12, d13, d23)
        except DegenerateNeighborTriangle as exc:
            raise ScenarioError(f"anchors: positions are collinear ({exc})") from exc
        for sid, p in self.sensors:
            if not is_in_convex_hull(
                distance(p, pa1), distance(p, pa2), distance(p, pa3), d12, d13, d23
            ):
                raise ScenarioError(
                    f"sensors[{sid}]: position {p.as_tuple()} lies outside the anchor hull"
                )
        if self.triangulation is not None:
            self._validate_triangulation(self.triangulation)
        if self.initial_estimates is not None:
            unknown = set(self.initial_estimates) - set(self.sensor_ids)
            if unknown:
                raise ScenarioError(f"initial_estimates: unknown sensor ids {sorted(unknown)}")

    def _validate_triangulation(self, tri: Mapping[int, tuple[int, int, int]]) -> None:
        node_ids = set(self.node_ids)
        if set(tri) != set(self.sensor_ids):
            raise InvalidTriangulation(
                f"triangulation: keys must be exactly the sensor ids {list(self.sensor_ids)}, "
                f"got {sorted(tri)}"
            )
        for sid, members in tri.items():
            members = tuple(members)
            if len(members) != 3 or len(set(members)) != 3:
                raise InvalidTriangulation(
                    f"triangulation[{sid}]: needs exactly 3 distinct node ids, got {list(members)}"
                )
            if sid in members:
                raise InvalidTriangulation(f"triangulation[{sid}]: set must not contain the sensor itself")
            if not set(members) <= node_ids:
                raise InvalidTriangulation(
                    f"triangulation[{sid}]: unknown node ids {sorted(set(members) - node_ids)}"
                )
            pi = self.position(sid)
            pj, pk, pl = (self.position(m) for m in members)
            try:
                inside = is_in_convex_hull(*_hull_distances(pi, pj, pk, pl))
            except DegenerateNeighborTriangle as exc:
                raise InvalidTriangulation(f"triangulation[{sid}]: {exc}") from exc
            if not inside:
                raise InvalidTriangulation(
                    f"triangulation[{sid}]: sensor {sid} is not in the convex hull of {list(members)}"
                )

    # -- lookups ---------------------------------------------------------

    @property
    def sensor_ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.sensors)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return ANCHOR_IDS + self.sensor_ids

    @property
    def n(self) -> int:
        return 3 + len(self.sensors)

    def position(self, node_id: int) -> Point2:
        for i, p in self.anchors:
            if i == node_id:
                return p
        for i, p in self.sensors:
            if i == node_id:
                return p
        raise KeyError(f"unknown node id {node_id}")

    @property
    def positions(self) -> dict[int, Point2]:
        return {i: p for i, p in self.anchors + self.sensors}

    @property
    def anchor_positions(self) -> np.ndarray:
        out = np.array([[p.x, p.y] for _, p in self.anchors], dtype=float)
        out.setflags(write=False)
        return out

    def distance_between(self, a: int, b: int) -> float:
        return distance(self.position(a), self.position(b))

    def with_triangulation(self, tri: Mapping[int, Iterable[int]]) -> "NetworkScenario":
        normalized = {int(k): tuple(sorted(int(m) for m in v)) for k, v in tri.items()}
        return replace(self, triangulation=normalized)

    def require_triangulation(self) -> Mapping[int, tuple[int, int, int]]:
        if self.triangulation is None:
            raise ScenarioError(
                "triangulation: not set; pin sets in the scenario or run discover_triangulation"
            )
        return self.triangulation


def find_triangulation_set(
    scenario: NetworkScenario,
    sensor_id: int,
    initial_radius: float | None = None,
    radius_increment: float | None = None,
) -> tuple[int, int, int]:
    """Find a triangulation set for one sensor by expanding-radius search.

    Neighbors within the current radius are ordered by (distance, id) and
    3-subsets are tried in lexicographic order of that list; the first
    subset whose convex hull contains the sensor wins. The radius starts at
    1.1x the distance to the 3rd-nearest node and grows by 10% of the
    initial value per round (both overridable), so results are fully
    deterministic.
    """
    if sensor_id not in scenario.sensor_ids:
        raise ScenarioError(f"sensor_id: {sensor_id} is not a sensor of this scenario")
    others = [nid for nid in scenario.node_ids if nid != sensor_id]
    by_dist = sorted(others, key=lambda nid: (scenario.distance_between(sensor_id, nid), nid))
    third = scenario.distance_between(sensor_id, by_dist[2])
    if initial_radius is None:
        initial_radius = 1.1 * third
    if radius_increment is None:
        radius_increment = 0.1 * initial_radius
    if initial_radius <= 0 or radius_increment <= 0:
        raise ScenarioError("initial_radius and radius_increment must be positive")

    pi = scenario.position(sensor_id)
    diameter = max(
        scenario.distance_between(a, b) for a, b in itertools.combinations(scenario.node_ids, 2)
    )
    radius = initial_radius
    while True:
        candidates = [nid for nid in by_dist if scenario.distance_between(sensor_id, nid) < radius]
        for combo in itertools.combinations(candidates, 3):
            pj, pk, pl = (scenario.position(m) for m in combo)
            try:
                if is_in_convex_hull(*_hull_distances(pi, pj, pk, pl)):
                    return tuple(sorted(combo))
            except DegenerateNeighborTriangle:
                continue  # collinear candidate triple
        if len(candidates) == len(others) or radius > diameter:
            raise NoTriangulationFound(
                f"sensor {sensor_id}: no 3-subset of reachable neighbors contains it "
                f"(radius grew to {radius})"
            )
        radius += radius_increment


def discover_triangulation(
    scenario: NetworkScenario,
    initial_radius: float | None = None,
    radius_increment: float | None = None,
) -> NetworkScenario:
    """Return a copy of the scenario with triangulation sets found for every sensor."""
    tri = {
        sid: find_triangulation_set(scenario, sid, initial_radius, radius_increment)
        for sid in scenario.sensor_ids
    }
    return scenario.with_triangulation(tri)


@dataclass(frozen=True)
class SystemMatrices:
    """Barycentric weight matrices of a scenario.

    Row i-4 of [F H] holds sensor i's weights over its triangulation set:
    anchor neighbors land in F (columns ordered by anchor id), sensor
    neighbors in H (columns ordered by sensor id). [F H] is row-stochastic
    with exactly three nonzero entries per row, and H has a zero diagonal.
    """

    F: np.ndarray
    H: np.ndarray
    anchor_ids: tuple[int, int, int]
    sensor_ids: tuple[int, ...]
    anchor_positions: np.ndarray
    triangulation: Mapping[int, tuple[int, int, int]]
    neighbor_weights: Mapping[int, tuple[tuple[int, float], ...]]

    def __post_init__(self) -> None:
        self.F.setflags(write=False)
        self.H.setflags(write=False)
        self.anchor_positions.setflags(write=False)

    @property
    def num_sensors(self) -> int:
        return len(self.sensor_ids)

    def row_of(self, sensor_id: int) -> int:
        return self.sensor_ids.index(sensor_id)

    @property
    def anchor_xy(self) -> dict[int, tuple[float, float]]:
        return {
            aid: (float(self.anchor_positions[k, 0]), float(self.anchor_positions[k, 1]))
            for k, aid in enumerate(self.anchor_ids)
        }

    def stacked(self) -> np.ndarray:
        return np.hstack([self.F, self.H])

    def validate(self) -> None:
        combined = self.stacked()
        if combined.min() < 0.0:
            raise InvalidTriangulation("matrix entries must be nonnegative")
        row_sums = combined.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > ROW_SUM_TOL:
            raise InvalidTriangulation(f"[F H] rows must sum to 1, got sums {row_sums}")
        nonzeros = (combined > 0.0).sum(axis=1)
        if not (nonzeros == 3).all():
            raise InvalidTriangulation(
                f"each [F H] row needs exactly 3 nonzero entries, got counts {nonzeros}"
            )
        if np.abs(np.diag(self.H)).max() > 0.0:
            raise InvalidTriangulation("H must have a zero diagonal")
        h_sums = self.H.sum(axis=1)
        for k, sid in enumerate(self.sensor_ids):
            has_anchor = any(m in self.anchor_ids for m in self.triangulation[sid])
            if has_anchor and not h_sums[k] < 1.0 - ROW_SUM_TOL:
                raise InvalidTriangulation(
                    f"sensor {sid}: H row sum {h_sums[k]} should be < 1 (anchor neighbor present)"
                )
            if not has_anchor and abs(h_sums[k] - 1.0) > ROW_SUM_TOL:
                raise InvalidTriangulation(
                    f"sensor {sid}: H row sum {h_sums[k]} should equal 1 (no anchor neighbors)"
                )


def build_system_matrices(scenario: NetworkScenario) -> SystemMatrices:
    """Compute F and H from ground-truth distances over the triangulation sets."""
    tri = scenario.require_triangulation()
    scenario._validate_triangulation(tri)
    sensor_ids = scenario.sensor_ids
    m = len(sensor_ids)
    F = np.zeros((m, 3))
    H = np.zeros((m, m))
    neighbor_weights: dict[int, tuple[tuple[int, float], ...]] = {}
    sensor_col = {sid: k for k, sid in enumerate(sensor_ids)}
    for k, sid in enumerate(sensor_ids):
        members = tuple(sorted(tri[sid]))
        pi = scenario.position(sid)
        pj, pk_, pl = (scenario.position(x) for x in members)
        weights = barycentric_from_distances(
            *_hull_distances(pi, pj, pk_, pl), neighbor_ids=members
        )
        for nid, w in weights.items():
            if w <= 0.0:
                raise InvalidTriangulation(
                    f"sensor {sid}: zero weight for neighbor {nid}; the sensor lies on "
                    "the boundary of its triangulation set"
                )
            if nid in ANCHOR_IDS:
                F[k, nid - 1] = w
            else:
                H[k, sensor_col[nid]] = w
        neighbor_weights[sid] = tuple(weights.items())
    matrices = SystemMatrices(
        F=F,
        H=H,
        anchor_ids=ANCHOR_IDS,
        sensor_ids=sensor_ids,
        anchor_positions=np.array(scenario.anchor_positions, dtype=float),
        triangulation={sid: tuple(sorted(tri[sid])) for sid in sensor_ids},
        neighbor_weights=neighbor_weights,
    )
    matrices.validate()
    return matrices


def hop_counts(
    triangulation: Mapping[int, Iterable[int]],
    sensor_ids: Iterable[int],
    anchor_ids: Iterable[int] = ANCHOR_IDS,
) -> dict[int, int]:
    """Shortest directed-path length from the merged anchor source to each sensor.

    The digraph has an arc r -> i for every r in sensor i's triangulation
    set. Raises UnreachableSensor when some sensor cannot be reached.
    """
    sensor_ids = tuple(sensor_ids)
    anchor_ids = tuple(anchor_ids)
    out_arcs: dict[int, list[int]] = {}
    for i in sensor_ids:
        for r in triangulation[i]:
            out_arcs.setdefault(r, []).append(i)
    dist: dict[int, int] = {a: 0 for a in anchor_ids}
    queue = deque(anchor_ids)
    while queue:
        r = queue.popleft()
        for i in out_arcs.get(r, ()):
            if i not in dist:
                dist[i] = dist[r] + 1
                queue.append(i)
    missing = [i for i in sensor_ids if i not in dist]
    if missing:
        raise UnreachableSensor(f"sensors {missing} have no directed path from any anchor")
    return {i: dist[i] for i in sensor_ids}


def anchor_to_sensor_distance_bound(scenario: NetworkScenario) -> int:
    """Longest anchor-to-sensor shortest path; the reachability window length."""
    counts = hop_counts(scenario.require_triangulation(), scenario.sensor_ids)
    return max(counts.values())


# -- scenario file I/O ----------------------------------------------------


def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"{context}: missing required field '{key}'")
    return mapping[key]


def _as_number(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{context}: expected a number, got {value!r}")
    return float(value)


def _node_entry(entry, context: str) -> tuple[int, Point2]:
    if not isinstance(entry, Mapping):
        raise ScenarioError(f"{context}: expected an object with id/x/y")
    nid = _require(entry, "id", context)
    if not isinstance(nid, int) or isinstance(nid, bool) or nid <= 0:
        raise ScenarioError(f"{context}.id: expected a positive integer, got {nid!r}")
    x = _as_number(_require(entry, "x", context), f"{context}.x")
    y = _as_number(_require(entry, "y", context), f"{context}.y")
    try:
        return nid, Point2(x, y)
    except ValueError as exc:
        raise ScenarioError(f"{context}: {exc}") from exc


def scenario_from_dict(data: Mapping, allow_unit_gamma: bool = False) -> NetworkScenario:
    """Build and validate a scenario from its JSON-shaped dictionary."""
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario: top level must be a JSON object")
    anchors_raw = _require(data, "anchors", "scenario")
    sensors_raw = _require(data, "sensors", "scenario")
    if not isinstance(anchors_raw, list) or len(anchors_raw) != 3:
        raise ScenarioError("anchors: expected a list of exactly 3 entries")
    if not isinstance(sensors_raw, list):
        raise ScenarioError("sensors: expected a list")
    anchors = tuple(
        sorted(
            (_node_entry(e, f"anchors[{k}]") for k, e in enumerate(anchors_raw)),
            key=lambda entry: entry[0],
        )
    )
    sensors = tuple(
        sorted(
            (_node_entry(e, f"sensors[{k}]") for k, e in enumerate(sensors_raw)),
            key=lambda entry: entry[0],
        )
    )
    gamma = _as_number(_require(data, "gamma", "scenario"), "gamma")

    triangulation = None
    if data.get("triangulation") is not None:
        tri_raw = data["triangulation"]
        if not isinstance(tri_raw, Mapping):
            raise ScenarioError("triangulation: expected an object mapping sensor id to 3 ids")
        triangulation = {}
        for key, members in tri_raw.items():
            try:
                sid = int(key)
            except (TypeError, ValueError):
                raise ScenarioError(f"triangulation: key {key!r} is not an integer id") from None
            if not isinstance(members, list) or len(members) != 3:
                raise ScenarioError(f"triangulation[{key}]: expected a list of 3 node ids")
            triangulation[sid] = tuple(sorted(int(v) for v in members))

    initial = None
    if data.get("initial_estimates") is not None:
        init_raw = data["initial_estimates"]
        if not isinstance(init_raw, Mapping):
            raise ScenarioError("initial_estimates: expected an object mapping sensor id to [x, y]")
        initial = {}
        for key, xy in init_raw.items():
            sid = int(key)
            if not isinstance(xy, list) or len(xy) != 2:
                raise ScenarioError(f"initial_estimates[{key}]: expected [x, y]")
            initial[sid] = Point2(
                _as_number(xy[0], f"initial_estimates[{key}][0]"),
                _as_number(xy[1], f"initial_estimates[{key}][1]"),
            )

    return NetworkScenario(
        anchors=anchors,
        sensors=sensors,
        triangulation=triangulation,
        gamma=gamma,
        initial_estimates=initial,
        allow_unit_gamma=allow_unit_gamma,
    )


def load_scenario(path: str | Path, allow_unit_gamma: bool = False) -> NetworkScenario:
    """Load a scenario JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(data, allow_unit_gamma=allow_unit_gamma)


def scenario_to_dict(scenario: NetworkScenario) -> dict:
    data: dict = {
        "anchors": [{"id": i, "x": p.x, "y": p.y} for i, p in scenario.anchors],
        "sensors": [{"id": i, "x": p.x, "y": p.y} for i, p in scenario.sensors],
        "gamma": scenario.gamma,
    }
    if scenario.triangulation is not None:
        data["triangulation"] = {
            str(sid): list(members) for sid, members in sorted(scenario.triangulation.items())
        }
    if scenario.initial_estimates is not None:
        data["initial_estimates"] = {
            str(sid): [p.x, p.y] for sid, p in sorted(scenario.initial_estimates.items())
        }
    return data


def save_scenario(scenario: NetworkScenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n")
