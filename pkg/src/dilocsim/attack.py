"""Denial-of-service attack schedules.

A schedule is a sequence of active periods: the k-th period starts at
instant s_k, lasts through s_k + phi_k inclusive (dwell phi_k = 0 is a
single pulse), and carries the set of directed links denied at each of its
instants. Periods must be disjoint: construction enforces
s_{k+1} > s_k + phi_k, and rejects violations unless allow_invalid is set
(stress tests only; convergence is then not guaranteed).

Links are directed arcs (j, i): denying (j, i) stops sensor i from
receiving j's estimate. Bidirectional denial is expressed by listing both
arcs.
"""
from __future__ import annotations

import bisect
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, AbstractSet, Iterable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .network import NetworkScenario

Arc = tuple[int, int]  # (source j, target i): directed link j -> i


class ScheduleError(ValueError):
    """Schedule construction or file problem."""


class InvalidParameters(ScheduleError):
    """Generator parameters out of range."""


class UnknownLink(ScheduleError):
    """A scheduled link is not an arc of the scenario it is applied to."""


class HorizonExceeded(ScheduleError):
    """Query beyond the iteration range the schedule covers."""


def _normalize_links(links: Iterable[Sequence[int]], context: str) -> frozenset[Arc]:
    out = set()
    for link in links:
        pair = tuple(link)
        if len(pair) != 2:
            raise ScheduleError(f"{context}: link {link!r} must be a [source, target] pair")
        out.add((int(pair[0]), int(pair[1])))
    return frozenset(out)


@dataclass(frozen=True)
class AttackPeriod:
    """One active period: start instant, dwell, and per-instant link sets."""

    start: int
    dwell: int
    links_per_instant: tuple[frozenset[Arc], ...]

    def __post_init__(self) -> None:
        if self.start < 0 or self.dwell < 0:
            raise ScheduleError(f"period: start {self.start} and dwell {self.dwell} must be >= 0")
        if len(self.links_per_instant) != self.dwell + 1:
            raise ScheduleError(
                f"period at {self.start}: needs {self.dwell + 1} per-instant link sets, "
                f"got {len(self.links_per_instant)}"
            )

    @classmethod
    def uniform(cls, start: int, dwell: int, links: Iterable[Arc]) -> "AttackPeriod":
        links = frozenset((int(j), int(i)) for j, i in links)
        return cls(start, dwell, (links,) * (dwell + 1))

    @property
    def end(self) -> int:
        """Last active instant, inclusive."""
        return self.start + self.dwell

    def covers(self, t: int) -> bool:
        return self.start <= t <= self.end

    def links_at(self, t: int) -> frozenset[Arc]:
        return self.links_per_instant[t - self.start]


@dataclass(frozen=True)
class DenialMask:
    """Per-instant denial: target sensor id -> denied in-neighbor ids."""

    denied: Mapping[int, frozenset[int]]

    def denied_neighbors(self, sensor_id: int) -> frozenset[int]:
        return self.denied.get(sensor_id, frozenset())

    def is_denied(self, sensor_id: int) -> bool:
        return sensor_id in self.denied

    def __bool__(self) -> bool:
        return bool(self.denied)


EMPTY_MASK = DenialMask({})


class AttackSchedule:
    """Attack timing plus denied-link sets, explicit or periodic.

    Explicit schedules enumerate their periods (exhaustively, unless a
    horizon marks where coverage ends). Periodic schedules repeat one
    period pattern every `stride` instants, indefinitely.
    """

    def __init__(
        self,
        periods: Sequence[AttackPeriod] = (),
        *,
        horizon: int | None = None,
        allow_invalid: bool = False,
        generator: str = "explicit",
        generator_params: dict | None = None,
    ) -> None:
        self.kind = "explicit"
        self.periods = tuple(sorted(periods, key=lambda p: p.start))
        self.horizon = horizon
        self.allow_invalid = allow_invalid
        self.generator = generator
        self.generator_params = dict(generator_params or {})
        self._starts = [p.start for p in self.periods]
        if not allow_invalid:
            for prev, cur in zip(self.periods, self.periods[1:]):
                if cur.start <= prev.end:
                    raise ScheduleError(
                        f"periods: start {cur.start} must exceed the previous period's "
                        f"end {prev.end} (use allow_invalid to override)"
                    )

    @classmethod
    def periodic(
        cls,
        start: int,
        stride: int,
        dwell: int,
        links_per_instant: Sequence[Iterable[Arc]],
        *,
        horizon: int | None = None,
        allow_invalid: bool = False,
    ) -> "AttackSchedule":
        if stride < 1 or dwell < 0 or start < 0:
            raise ScheduleError(
                f"periodic: need start >= 0, stride >= 1, dwell >= 0; "
                f"got start={start}, stride={stride}, dwell={dwell}"
            )
        if dwell >= stride and not allow_invalid:
            raise ScheduleError(
                f"periodic: dwell {dwell} must be smaller than stride {stride} "
                "(use allow_invalid to override)"
            )
        pattern = tuple(
            frozenset((int(j), int(i)) for j, i in links) for links in links_per_instant
        )
        if len(pattern) != dwell + 1:
            raise ScheduleError(
                f"periodic: needs {dwell + 1} per-instant link sets, got {len(pattern)}"
            )
        self = cls(
            (),
            horizon=horizon,
            allow_invalid=allow_invalid,
            generator="periodic",
            generator_params={"start": start, "stride": stride, "dwell": dwell},
        )
        self.kind = "periodic"
        self._pstart = start
        self._pstride = stride
        self._pdwell = dwell
        self._pattern = pattern
        return self

    # -- queries -----------------------------------------------------------

    def _check_horizon(self, t: int) -> None:
        if t < 0:
            raise ScheduleError(f"t: iteration index must be >= 0, got {t}")
        if self.horizon is not None and t >= self.horizon:
            raise HorizonExceeded(f"t={t} is beyond the schedule horizon {self.horizon}")

    def onset(self, k: int) -> int:
        """Start instant s_k of the k-th active period."""
        if k < 0:
            raise ScheduleError(f"period index must be >= 0, got {k}")
        if self.kind == "periodic":
            s = self._pstart + k * self._pstride
            if self.horizon is not None and s >= self.horizon:
                raise HorizonExceeded(f"period {k} starts at {s}, beyond horizon {self.horizon}")
            return s
        if k >= len(self.periods):
            raise HorizonExceeded(f"schedule defines only {len(self.periods)} periods, asked for {k}")
        return self.periods[k].start

    def num_periods(self) -> int | None:
        """Number of periods, or None for an unbounded periodic schedule."""
        if self.kind == "periodic":
            if self.horizon is None:
                return None
            span = self.horizon - self._pstart
            return max(0, -(-span // self._pstride)) if span > 0 else 0
        return len(self.periods)

    def _period_covering(self, t: int) -> AttackPeriod | None:
        idx = bisect.bisect_right(self._starts, t) - 1
        if idx >= 0 and self.periods[idx].covers(t):
            return self.periods[idx]
        return None

    def is_active(self, t: int) -> bool:
        """Whether instant t falls inside some active period."""
        self._check_horizon(t)
        if self.kind == "periodic":
            if t < self._pstart:
                return False
            return (t - self._pstart) % self._pstride <= self._pdwell
        return self._period_covering(t) is not None

    def links_at(self, t: int) -> frozenset[Arc]:
        """Directed links denied at instant t (empty when dormant)."""
        self._check_horizon(t)
        if self.kind == "periodic":
            if t < self._pstart:
                return frozenset()
            offset = (t - self._pstart) % self._pstride
            return self._pattern[offset] if offset <= self._pdwell else frozenset()
        period = self._period_covering(t)
        return period.links_at(t) if period is not None else frozenset()

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "periodic":
            data: dict = {
                "type": "periodic",
                "start": self._pstart,
                "stride": self._pstride,
                "dwell": self._pdwell,
            }
            data.update(_links_field(self._pattern))
        else:
            data = {
                "type": "explicit",
                "periods": [
                    {"s": p.start, "phi": p.dwell, **_links_field(p.links_per_instant)}
                    for p in self.periods
                ],
            }
            if self.generator == "random":
                data["generated_from"] = dict(self.generator_params)
        if self.horizon is not None:
            data["horizon"] = self.horizon
        if self.allow_invalid:
            data["allow_invalid"] = True
        return data


def _links_field(pattern: Sequence[frozenset[Arc]]) -> dict:
    as_lists = [sorted([list(a) for a in links]) for links in pattern]
    if all(links == as_lists[0] for links in as_lists[1:]):
        return {"links": as_lists[0]}
    return {"links_per_instant": as_lists}


EMPTY_SCHEDULE = AttackSchedule(())


# -- spec operations -------------------------------------------------------


def is_active(schedule: AttackSchedule, t: int) -> bool:
    """Whether instant t falls inside some active period of the schedule."""
    return schedule.is_active(t)


def denial_mask_for_arcs(
    schedule: AttackSchedule | None,
    in_neighbors: Mapping[int, AbstractSet[int] | Sequence[int]],
    t: int,
) -> DenialMask:
    """Denied in-neighbors per target sensor at instant t.

    `in_neighbors` maps each sensor to its triangulation set. Scheduled
    links that are not arcs of that map raise UnknownLink.
    """
    if schedule is None:
        return EMPTY_MASK
    links = schedule.links_at(t)
    if not links:
        return EMPTY_MASK
    denied: dict[int, set[int]] = {}
    for j, i in sorted(links):
        members = in_neighbors.get(i)
        if members is None or j not in members:
            raise UnknownLink(f"attacked link ({j}, {i}) is not an arc of the scenario")
        denied.setdefault(i, set()).add(j)
    return DenialMask({i: frozenset(v) for i, v in denied.items()})


def denial_mask(schedule: AttackSchedule | None, scenario: "NetworkScenario", t: int) -> DenialMask:
    """Denied in-neighbors per target sensor of the scenario at instant t."""
    return denial_mask_for_arcs(schedule, scenario.require_triangulation(), t)


def validate_schedule_links(schedule: AttackSchedule, scenario: "NetworkScenario") -> None:
    """Check every scheduled link against the scenario's arcs, failing fast."""
    tri = scenario.require_triangulation()
    if schedule.kind == "periodic":
        link_sets = schedule._pattern
    else:
        link_sets = [links for p in schedule.periods for links in p.links_per_instant]
    for links in link_sets:
        for j, i in sorted(links):
            members = tri.get(i)
            if members is None or j not in members:
                raise UnknownLink(f"attacked link ({j}, {i}) is not an arc of the scenario")


def scenario_arcs(scenario: "NetworkScenario") -> list[Arc]:
    """All directed arcs (j, i) of the scenario, ordered by (target, source)."""
    tri = scenario.require_triangulation()
    return [(j, i) for i in scenario.sensor_ids for j in sorted(tri[i])]


def random_schedule(
    seed: int,
    scenario: "NetworkScenario",
    horizon: int,
    stride: int,
    dwell: int,
    drop_probability: float,
) -> AttackSchedule:
    """Deterministic random schedule: periods at k*stride with the given dwell.

    Each scenario arc is included in each period's link set independently
    with the given probability. The same seed and parameters always produce
    the identical schedule.
    """
    if not (stride > dwell >= 0):
        raise InvalidParameters(f"need stride > dwell >= 0, got stride={stride}, dwell={dwell}")
    if not (0.0 <= drop_probability <= 1.0):
        raise InvalidParameters(f"drop_probability must be in [0, 1], got {drop_probability}")
    if horizon < 1:
        raise InvalidParameters(f"horizon must be >= 1, got {horizon}")
    arcs = scenario_arcs(scenario)
    rng = np.random.default_rng(seed)
    n_periods = -(-horizon // stride)  # periods with start < horizon
    # one draw in C order consumes the stream exactly like per-period draws
    keep = rng.random((n_periods, len(arcs))) < drop_probability
    periods = []
    for k in range(n_periods):
        links = frozenset(itertools.compress(arcs, keep[k]))
        periods.append(AttackPeriod(k * stride, dwell, (links,) * (dwell + 1)))
    return AttackSchedule(
        periods,
        horizon=horizon,
        generator="random",
        generator_params={
            "seed": seed,
            "stride": stride,
            "dwell": dwell,
            "drop_probability": drop_probability,
            "horizon": horizon,
        },
    )


# -- schedule file I/O ------------------------------------------------------


def schedule_from_dict(
    data: Mapping,
    scenario: "NetworkScenario | None" = None,
    allow_invalid: bool = False,
) -> AttackSchedule:
    """Build a schedule from its JSON-shaped dictionary.

    Schedules of type "random" need a scenario to enumerate arcs and are
    resolved to explicit form for exact replay.
    """
    if not isinstance(data, Mapping):
        raise ScheduleError("schedule: top level must be a JSON object")
    kind = data.get("type", "explicit")
    allow_invalid = allow_invalid or bool(data.get("allow_invalid", False))
    horizon = data.get("horizon")
    if horizon is not None and (not isinstance(horizon, int) or horizon < 1):
        raise ScheduleError(f"horizon: expected a positive integer, got {horizon!r}")

    if kind == "random":
        if scenario is None:
            raise ScheduleError("schedule type 'random' requires a scenario to enumerate arcs")
        for key in ("seed", "stride", "dwell", "drop_probability", "horizon"):
            if key not in data:
                raise ScheduleError(f"schedule: missing required field '{key}' for type 'random'")
        return random_schedule(
            seed=int(data["seed"]),
            scenario=scenario,
            horizon=int(data["horizon"]),
            stride=int(data["stride"]),
            dwell=int(data["dwell"]),
            drop_probability=float(data["drop_probability"]),
        )

    if kind == "periodic":
        for key in ("stride", "dwell"):
            if key not in data:
                raise ScheduleError(f"schedule: missing required field '{key}' for type 'periodic'")
        dwell = int(data["dwell"])
        pattern = _pattern_from_fields(data, dwell, "schedule")
        return AttackSchedule.periodic(
            start=int(data.get("start", 0)),
            stride=int(data["stride"]),
            dwell=dwell,
            links_per_instant=pattern,
            horizon=horizon,
            allow_invalid=allow_invalid,
        )

    if kind == "explicit":
        periods_raw = data.get("periods", [])
        if not isinstance(periods_raw, list):
            raise ScheduleError("periods: expected a list")
        periods = []
        for k, entry in enumerate(periods_raw):
            if not isinstance(entry, Mapping) or "s" not in entry or "phi" not in entry:
                raise ScheduleError(f"periods[{k}]: expected an object with 's' and 'phi'")
            dwell = int(entry["phi"])
            pattern = _pattern_from_fields(entry, dwell, f"periods[{k}]")
            periods.append(AttackPeriod(int(entry["s"]), dwell, tuple(pattern)))
        return AttackSchedule(periods, horizon=horizon, allow_invalid=allow_invalid)

    raise ScheduleError(f"type: unknown schedule type {kind!r}")


def _pattern_from_fields(entry: Mapping, dwell: int, context: str) -> list[frozenset[Arc]]:
    if "links_per_instant" in entry:
        raw = entry["links_per_instant"]
        if not isinstance(raw, list) or len(raw) != dwell + 1:
            raise ScheduleError(
                f"{context}.links_per_instant: expected {dwell + 1} link lists"
            )
        return [_normalize_links(links, context) for links in raw]
    links = _normalize_links(entry.get("links", []), context)
    return [links] * (dwell + 1)


def load_schedule(
    path: str | Path,
    scenario: "NetworkScenario | None" = None,
    allow_invalid: bool = False,
) -> AttackSchedule:
    """Load a schedule JSON file, resolving 'random' against the scenario."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScheduleError(f"{path}: not valid JSON ({exc})") from exc
    return schedule_from_dict(data, scenario=scenario, allow_invalid=allow_invalid)


def save_schedule(schedule: AttackSchedule, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schedule.to_dict(), indent=2, sort_keys=True) + "\n")
