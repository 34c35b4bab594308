"""Iteration engines and run harness.

Two engines share one consensus-update arithmetic. The classic engine
(diloc) keeps updating through partial denials, summing over whatever
in-links survive. The abandonment-strategy engine (asdiloc) freezes a
sensor's estimate for any instant in which at least one of its in-links is
denied, and updates with the full neighbor sum otherwise. The masked
matrix form (row-zeroed F(t), H(t) and the sub-stochastic Q(t)) provides an
independent second path for the abandonment engine, used by the dual-path
verification mode.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .attack import EMPTY_MASK, AttackSchedule, DenialMask, denial_mask_for_arcs
from .geometry import Point2, distance
from .network import NetworkScenario, SystemMatrices, build_system_matrices

# Estimates beyond this magnitude abort the run: the classic engine can
# orbit under partial denial, and the guard protects batch harnesses.
DIVERGENCE_LIMIT = 1e12

ALGORITHMS = ("diloc", "asdiloc")


class LocalizationError(RuntimeError):
    """Iteration-engine failure."""


class SingularSystem(LocalizationError):
    """The exact-solution solve failed; some sensor is unreachable from the anchors."""


class NonFinite(LocalizationError):
    """An estimate overflowed or became non-finite."""


@dataclass(frozen=True)
class EstimateState:
    """Location estimates of every sensor at one iteration instant."""

    t: int
    estimates: Mapping[int, Point2]


@dataclass(frozen=True)
class MaskedMatrices:
    """Row-masked system matrices for one instant.

    Rows of [F_t H_t] are zeroed exactly for sensors with a nonempty denial
    set; N_t holds the remaining row sums and Q_t = I - gamma (N_t - H_t)
    is nonnegative with row sums <= 1 for gain in (0, 1).
    """

    F_t: np.ndarray
    H_t: np.ndarray
    N_t: np.ndarray  # diagonal entries, 1-D
    Q_t: np.ndarray

    def validate(self, gamma: float) -> None:
        if not np.allclose(self.N_t, self.F_t.sum(axis=1) + self.H_t.sum(axis=1), atol=1e-12):
            raise LocalizationError("N_t must hold the row sums of [F_t H_t]")
        if self.Q_t.min() < 0.0:
            raise LocalizationError("Q_t must be nonnegative")
        if 0.0 < gamma < 1.0 and self.Q_t.sum(axis=1).max() > 1.0 + 1e-12:
            raise LocalizationError("Q_t row sums must not exceed 1")


@dataclass
class RunTrace:
    """Per-iteration record of one run.

    states[k] is the estimate state at iteration k; errors[k] the
    max-over-sensors Euclidean distance to the exact solution at that
    state. masks[k] is the denial mask applied during the transition from
    state k to state k+1 (one entry per transition). converged_at is the
    first state index whose error dropped below the tolerance, or None.
    """

    sensor_ids: tuple[int, ...]
    states: list[EstimateState]
    errors: list[float]
    masks: list[DenialMask]
    converged_at: int | None
    exact: Mapping[int, Point2]

    @property
    def final_error(self) -> float:
        return self.errors[-1]

    @property
    def iterations(self) -> int:
        return len(self.states) - 1


def default_initial_state(scenario: NetworkScenario) -> EstimateState:
    """All sensors start at the anchor centroid (deterministic and inside the
    anchor hull), except where the scenario pins per-sensor estimates."""
    cx = sum(p.x for _, p in scenario.anchors) / 3.0
    cy = sum(p.y for _, p in scenario.anchors) / 3.0
    centroid = Point2(cx, cy)
    overrides = scenario.initial_estimates or {}
    return EstimateState(0, {sid: overrides.get(sid, centroid) for sid in scenario.sensor_ids})


def exact_solution(
    matrices: SystemMatrices, anchor_positions: np.ndarray | None = None
) -> dict[int, Point2]:
    """Solve (I - H) X = F p_a directly; the solution is the sensors' locations.

    Both coordinate columns are solved in one call. Raises SingularSystem
    when the solve fails or leaves a large residual, which signals a sensor
    with no anchor influence.
    """
    p_a = matrices.anchor_positions if anchor_positions is None else np.asarray(anchor_positions, float)
    m = matrices.num_sensors
    lhs = np.eye(m) - matrices.H
    rhs = matrices.F @ p_a
    try:
        solution = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"(I - H) is singular: {exc}") from exc
    residual = np.abs(lhs @ solution - rhs).max()
    scale = max(1.0, np.abs(solution).max())
    if not np.isfinite(solution).all() or residual > 1e-8 * scale:
        raise SingularSystem(
            f"(I - H) solve left residual {residual}; some sensor is unreachable from the anchors"
        )
    return {
        sid: Point2(float(solution[k, 0]), float(solution[k, 1]))
        for k, sid in enumerate(matrices.sensor_ids)
    }


def _position_table(state: EstimateState, matrices: SystemMatrices) -> dict[int, tuple[float, float]]:
    pos = dict(matrices.anchor_xy)
    for sid, p in state.estimates.items():
        pos[sid] = (p.x, p.y)
    return pos


def _guarded_point(x: float, y: float, sensor_id: int) -> Point2:
    # abs(nan) <= limit is False, so this also catches NaN.
    if not (abs(x) <= DIVERGENCE_LIMIT and abs(y) <= DIVERGENCE_LIMIT):
        raise NonFinite(f"sensor {sensor_id}: estimate ({x}, {y}) left the finite range")
    return Point2(x, y)


def _step_core(
    state: EstimateState,
    matrices: SystemMatrices,
    gamma: float,
    mask: DenialMask,
    freeze_on_denial: bool,
) -> EstimateState:
    pos = _position_table(state, matrices)
    denied_map = mask.denied
    new: dict[int, Point2] = {}
    for sid, nbrs in matrices.neighbor_weights.items():
        point = state.estimates[sid]
        denied = denied_map.get(sid)
        if denied and freeze_on_denial:
            new[sid] = point  # abandon this update entirely
            continue
        px, py = point.x, point.y
        dx = dy = 0.0
        for r, w in nbrs:
            if denied and r in denied:
                continue
            qx, qy = pos[r]
            dx += w * (qx - px)
            dy += w * (qy - py)
        new[sid] = _guarded_point(px + gamma * dx, py + gamma * dy, sid)
    return EstimateState(state.t + 1, new)


def diloc_step(
    state: EstimateState,
    matrices: SystemMatrices,
    gamma: float,
    mask: DenialMask = EMPTY_MASK,
) -> EstimateState:
    """One synchronous classic update: denied in-links drop out of the sum.

    With an empty mask this is the plain consensus-gain iteration; with
    gamma = 1 it reduces to replacing each estimate by the barycentric
    combination of its neighbors' estimates.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return _step_core(state, matrices, gamma, mask, freeze_on_denial=False)


def asdiloc_step(
    state: EstimateState,
    matrices: SystemMatrices,
    gamma: float,
    mask: DenialMask = EMPTY_MASK,
) -> EstimateState:
    """One abandonment-strategy update.

    A sensor with any denied in-link keeps its previous estimate, even when
    the other links are live; otherwise it applies the full neighbor sum.
    The attack-free arithmetic is shared with diloc_step, so the two
    engines produce bit-identical trajectories on empty schedules.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    return _step_core(state, matrices, gamma, mask, freeze_on_denial=True)


def masked_matrices(
    matrices: SystemMatrices, mask: DenialMask, gamma: float
) -> MaskedMatrices:
    """Row-masked matrix form of the abandonment rule for one instant."""
    F_t = matrices.F.copy()
    H_t = matrices.H.copy()
    for sid in mask.denied:
        row = matrices.row_of(sid)
        F_t[row, :] = 0.0
        H_t[row, :] = 0.0
    N_t = F_t.sum(axis=1) + H_t.sum(axis=1)
    Q_t = np.eye(matrices.num_sensors) - gamma * (np.diag(N_t) - H_t)
    return MaskedMatrices(F_t=F_t, H_t=H_t, N_t=N_t, Q_t=Q_t)


def state_vector(state: EstimateState, sensor_ids: Sequence[int]) -> np.ndarray:
    """Stack the estimates into an (m, 2) array ordered like sensor_ids."""
    return np.array([[state.estimates[s].x, state.estimates[s].y] for s in sensor_ids])


def asdiloc_matrix_step(
    state: EstimateState,
    matrices: SystemMatrices,
    gamma: float,
    mask: DenialMask = EMPTY_MASK,
) -> EstimateState:
    """Matrix-form abandonment update: gamma F_t p_a + Q_t p.

    Algebraically identical to asdiloc_step; kept as an independent
    computation path for cross-checking.
    """
    mm = masked_matrices(matrices, mask, gamma)
    current = state_vector(state, matrices.sensor_ids)
    updated = gamma * mm.F_t @ matrices.anchor_positions + mm.Q_t @ current
    estimates = {
        sid: _guarded_point(float(updated[k, 0]), float(updated[k, 1]), sid)
        for k, sid in enumerate(matrices.sensor_ids)
    }
    return EstimateState(state.t + 1, estimates)


def max_error(estimates: Mapping[int, Point2], exact: Mapping[int, Point2]) -> float:
    """Max-over-sensors Euclidean distance between estimates and the exact solution."""
    return max(distance(estimates[sid], exact[sid]) for sid in exact)


DUAL_PATH_TOL = 1e-12

STOP_RULES = ("error", "step")


def _step_delta(old: EstimateState, new: EstimateState) -> float:
    return max(
        max(abs(new.estimates[sid].x - p.x), abs(new.estimates[sid].y - p.y))
        for sid, p in old.estimates.items()
    )


def run(
    scenario: NetworkScenario,
    algorithm: str,
    schedule: AttackSchedule | None = None,
    *,
    initial: EstimateState | None = None,
    max_iters: int = 10000,
    tol: float = 1e-6,
    gamma: float | None = None,
    matrices: SystemMatrices | None = None,
    stop_on_convergence: bool = True,
    stop_rule: str = "error",
    dual_path_check: bool = False,
) -> RunTrace:
    """Drive one engine over a schedule, recording errors against the exact solution.

    With the default "error" rule, converged_at is the first state index
    whose max error to the exact solution drops below tol. The "step" rule
    instead watches the successive difference (componentwise max of one
    update), for deployments where ground truth is unavailable; note that a
    fully frozen instant satisfies it trivially. With stop_on_convergence
    the loop ends at converged_at, otherwise it runs the full max_iters.
    dual_path_check additionally recomputes every abandonment update
    through the masked matrix form and requires componentwise agreement
    within 1e-12.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    if stop_rule not in STOP_RULES:
        raise ValueError(f"stop_rule must be one of {STOP_RULES}, got {stop_rule!r}")
    if matrices is None:
        matrices = build_system_matrices(scenario)
    g = scenario.gamma if gamma is None else gamma
    step = diloc_step if algorithm == "diloc" else asdiloc_step
    exact = exact_solution(matrices)
    arcs = matrices.triangulation

    state = initial if initial is not None else default_initial_state(scenario)
    if set(state.estimates) != set(scenario.sensor_ids):
        raise ValueError("initial estimates must cover exactly the scenario's sensors")

    states = [state]
    errors = [max_error(state.estimates, exact)]
    masks: list[DenialMask] = []
    converged_at = 0 if stop_rule == "error" and errors[0] < tol else None

    for t in range(max_iters):
        if converged_at is not None and stop_on_convergence:
            break
        mask = denial_mask_for_arcs(schedule, arcs, t)
        new_state = step(state, matrices, g, mask)
        if dual_path_check and algorithm == "asdiloc":
            alt = asdiloc_matrix_step(state, matrices, g, mask)
            for sid in matrices.sensor_ids:
                a, b = new_state.estimates[sid], alt.estimates[sid]
                if abs(a.x - b.x) > DUAL_PATH_TOL or abs(a.y - b.y) > DUAL_PATH_TOL:
                    raise LocalizationError(
                        f"dual-path mismatch at t={t}, sensor {sid}: "
                        f"scalar {a.as_tuple()} vs matrix {b.as_tuple()}"
                    )
        delta = _step_delta(state, new_state) if stop_rule == "step" else None
        state = new_state
        masks.append(mask)
        states.append(state)
        err = max_error(state.estimates, exact)
        errors.append(err)
        if converged_at is None:
            if stop_rule == "error" and err < tol:
                converged_at = len(states) - 1
            elif stop_rule == "step" and delta is not None and delta < tol:
                converged_at = len(states) - 1

    return RunTrace(
        sensor_ids=matrices.sensor_ids,
        states=states,
        errors=errors,
        masks=masks,
        converged_at=converged_at,
        exact=exact,
    )


# -- trace CSV export --------------------------------------------------------

TRACE_COLUMNS = ("t", "sensor_id", "x", "y", "err_i", "masked")


def _fmt(value: float) -> str:
    return format(value, ".17g")


def trace_rows(trace: RunTrace):
    """Yield per-state, per-sensor rows: (t, sensor_id, x, y, err_i, masked).

    masked is 1 when the sensor had a denied in-link in the transition
    leaving state t (the final state has no outgoing transition, so 0).
    """
    for k, state in enumerate(trace.states):
        mask = trace.masks[k] if k < len(trace.masks) else EMPTY_MASK
        for sid in trace.sensor_ids:
            p = state.estimates[sid]
            err = distance(p, trace.exact[sid])
            yield (k, sid, p.x, p.y, err, 1 if mask.is_denied(sid) else 0)


def write_trace_csv(trace: RunTrace, path: str | Path) -> None:
    """Write the run trace as CSV (floats carry 17 significant digits)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for t, sid, x, y, err, masked in trace_rows(trace):
            writer.writerow((t, sid, _fmt(x), _fmt(y), _fmt(err), masked))


def read_trace_csv(path: str | Path) -> list[tuple[int, int, float, float, float, int]]:
    """Parse a trace CSV back into typed rows (exact float round-trip)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        return [
            (int(t), int(sid), float(x), float(y), float(err), int(masked))
            for t, sid, x, y, err, masked in reader
        ]
