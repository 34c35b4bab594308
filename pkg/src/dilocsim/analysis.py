"""Numerical verification of the convergence theory.

The augmented matrix of an instant stacks a unit row for the merged anchor
node on top of [gamma F(t) 1 | Q(t)] and is row-stochastic for any denial
mask. Its positivity pattern defines an edge relation; composing the
relations across a window of consecutive attack onsets must connect the
anchor node to every sensor once the window spans P periods, where P is
the longest anchor-to-sensor hop count. The same windows make the left
products of Q(t) strictly sub-stochastic, which drives the infinite
product to zero and the accumulated anchor feed to the exact barycentric
map (I - H)^{-1} F.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attack import AttackSchedule, HorizonExceeded, denial_mask_for_arcs
from .localization import MaskedMatrices, masked_matrices
from .network import SystemMatrices

M_ROW_TOL = 1e-12
# Product norms below this are indistinguishable from underflow noise.
UNDERFLOW_FLOOR = 1e-300

IDENTITY_TOL = 1e-10


class AnalysisError(RuntimeError):
    """A numerical convergence check failed."""


@dataclass(frozen=True)
class AugmentedMatrix:
    """Row-stochastic adjacency matrix of one instant over nodes {0..m}.

    Node 0 is the merged anchor node (unit row); node i >= 1 is the i-th
    sensor. Entry (i, 0) carries the anchor mass gamma * sum(F_t row) and
    the lower-right block is Q_t.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"augmented matrix must be square, got shape {v.shape}")
        if v.min() < 0.0:
            raise ValueError("augmented matrix must be nonnegative")
        if np.abs(v.sum(axis=1) - 1.0).max() > M_ROW_TOL:
            raise ValueError("augmented matrix rows must sum to 1")
        if v[0, 0] != 1.0 or np.abs(v[0, 1:]).max() > 0.0:
            raise ValueError("anchor row must be the unit row e_0")
        v.setflags(write=False)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def augmented_matrix(masked: MaskedMatrices, gamma: float) -> AugmentedMatrix:
    """Assemble the augmented adjacency matrix from one instant's masked blocks."""
    m = masked.Q_t.shape[0]
    values = np.zeros((m + 1, m + 1))
    values[0, 0] = 1.0
    values[1:, 0] = gamma * masked.F_t.sum(axis=1)
    values[1:, 1:] = masked.Q_t
    return AugmentedMatrix(values)


def masked_at(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    t: int,
) -> MaskedMatrices:
    """Masked system matrices for instant t under the schedule."""
    mask = denial_mask_for_arcs(schedule, matrices.triangulation, t)
    return masked_matrices(matrices, mask, gamma)


def augmented_at(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    t: int,
) -> AugmentedMatrix:
    return augmented_matrix(masked_at(schedule, matrices, gamma, t), gamma)


@dataclass(frozen=True)
class ReachabilityRelation:
    """Boolean relation over the augmented node set {0, 1, ..., m}."""

    relation: np.ndarray

    def __post_init__(self) -> None:
        self.relation.setflags(write=False)

    def contains(self, a: int, b: int) -> bool:
        return bool(self.relation[a, b])

    def anchor_reaches_all_sensors(self) -> bool:
        return bool(self.relation[0, 1:].all())


def _edge_pattern(matrix: AugmentedMatrix) -> np.ndarray:
    # Edge convention: the pair (a, b) is in the relation iff entry (b, a)
    # of the augmented matrix is positive, i.e. node b draws weight from a.
    # Positive diagonal entries contribute the self-loops.
    return matrix.values.T > 0.0


def compose_relations(window: Sequence[AugmentedMatrix]) -> ReachabilityRelation:
    """Compose the edge relations of a window of instants, in temporal order.

    The pair (a, b) survives the composition iff there is a chain
    a -> c1 -> ... -> b using one edge set per instant. Implemented as a
    boolean matrix product, so the result's (0, i) entries match the
    positivity of the corresponding numeric left product.
    """
    if not window:
        raise ValueError("window must contain at least one matrix")
    relation = _edge_pattern(window[0]).astype(np.uint8)
    for matrix in window[1:]:
        relation = (relation @ _edge_pattern(matrix).astype(np.uint8)) > 0
        relation = relation.astype(np.uint8)
    return ReachabilityRelation(relation.astype(bool))


def window_reachability(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    k: int,
    P: int,
) -> ReachabilityRelation:
    """Composed relation over the window spanning attack onsets k .. k+P."""
    if schedule is None or schedule.num_periods() == 0:
        raise ValueError("window reachability needs a schedule with at least one period")
    t0 = schedule.onset(k)
    t1 = schedule.onset(k + P)
    window = [augmented_at(schedule, matrices, gamma, t) for t in range(t0, t1)]
    return compose_relations(window)


def sigma_bound(matrices: SystemMatrices, gamma: float) -> float:
    """Uniform lower bound on the nonzero entries of every augmented matrix.

    The candidates are gamma times each barycentric weight and the
    self-weight 1 - gamma left by the gain; the bound is their minimum and
    lies strictly inside (0, 1) for gain in (0, 1).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    combined = matrices.stacked()
    nonzero = combined[combined > 0.0]
    return float(min(gamma * nonzero.min(), 1.0 - gamma))


def _q_product(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    t0: int,
    t1: int,
) -> np.ndarray:
    product = np.eye(matrices.num_sensors)
    for t in range(t0, t1):
        product = masked_at(schedule, matrices, gamma, t).Q_t @ product
    return product


def _inf_norm(matrix: np.ndarray) -> float:
    return float(np.abs(matrix).sum(axis=1).max()) if matrix.size else 0.0


def window_product_norm(
    schedule: AttackSchedule,
    matrices: SystemMatrices,
    gamma: float,
    m: int,
    P: int,
) -> float:
    """Infinity norm of the Q(t) left product over onsets m*P .. (m+1)*P.

    For a valid schedule and gain in (0, 1) the norm must be < 1; a value
    >= 1 raises unless the schedule was built with allow_invalid.
    """
    t0 = schedule.onset(m * P)
    t1 = schedule.onset((m + 1) * P)
    norm = _inf_norm(_q_product(schedule, matrices, gamma, t0, t1))
    if norm >= 1.0 and not schedule.allow_invalid:
        raise AnalysisError(
            f"window {m} ([{t0}, {t1})) has product norm {norm} >= 1; "
            "the schedule starves some sensor of anchor influence"
        )
    return norm


def product_vanishing_check(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    T: int,
) -> float:
    """Infinity norm of the Q(t) left product over instants [0, T).

    T = 0 gives the empty product (norm 1). Values below the underflow
    floor are reported as 0.
    """
    norm = _inf_norm(_q_product(schedule, matrices, gamma, 0, T))
    return 0.0 if 0.0 < norm < UNDERFLOW_FLOOR else norm


def product_norm_history(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    T: int,
    sample_every: int = 1,
) -> list[tuple[int, float]]:
    """Running left-product norms at sampled instants (for decay plots)."""
    product = np.eye(matrices.num_sensors)
    history = [(0, 1.0)]
    for t in range(T):
        product = masked_at(schedule, matrices, gamma, t).Q_t @ product
        if (t + 1) % sample_every == 0 or t + 1 == T:
            norm = _inf_norm(product)
            history.append((t + 1, 0.0 if 0.0 < norm < UNDERFLOW_FLOOR else norm))
    return history


def exact_anchor_map(matrices: SystemMatrices) -> np.ndarray:
    """(I - H)^{-1} F: each sensor's barycentric weights over the anchors."""
    m = matrices.num_sensors
    return np.linalg.solve(np.eye(m) - matrices.H, matrices.F)


def anchor_feed_identity_residual(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    t: int,
    limit: np.ndarray | None = None,
) -> float:
    """Residual of (I - Q(t)) (I - H)^{-1} F == gamma F(t) at one instant."""
    if limit is None:
        limit = exact_anchor_map(matrices)
    mm = masked_at(schedule, matrices, gamma, t)
    lhs = (np.eye(matrices.num_sensors) - mm.Q_t) @ limit
    return _inf_norm(lhs - gamma * mm.F_t)


def gamma_limit_check(
    schedule: AttackSchedule | None,
    matrices: SystemMatrices,
    gamma: float,
    T: int,
    identity_samples: int = 10,
    seed: int = 0,
) -> float:
    """Residual between the accumulated anchor feed and (I - H)^{-1} F.

    The feed accumulates as G(t) = Q(t) G(t-1) + gamma F(t) starting from
    G(0) = gamma F(0); its limit is the exact anchor map. Along the way the
    one-instant identity (I - Q(t)) (I - H)^{-1} F == gamma F(t) is spot
    checked at seeded random instants and must hold within 1e-10.
    """
    limit = exact_anchor_map(matrices)
    rng = np.random.default_rng(seed)
    sample_ts = rng.integers(0, max(T, 1), size=identity_samples) if identity_samples else []
    for t in sample_ts:
        residual = anchor_feed_identity_residual(schedule, matrices, gamma, int(t), limit)
        if residual > IDENTITY_TOL:
            raise AnalysisError(
                f"anchor-feed identity residual {residual} at t={t} exceeds {IDENTITY_TOL}"
            )
    feed = gamma * masked_at(schedule, matrices, gamma, 0).F_t
    for t in range(1, T + 1):
        mm = masked_at(schedule, matrices, gamma, t)
        feed = mm.Q_t @ feed + gamma * mm.F_t
    return _inf_norm(feed - limit)


# -- verification report -------------------------------------------------------


@dataclass
class WindowNormCheck:
    index: int
    start: int
    end: int
    norm: float
    ok: bool


@dataclass
class ReachabilityCheck:
    index: int
    start: int
    end: int
    ok: bool


@dataclass
class VerificationReport:
    """Outcome of the full convergence-theory check battery."""

    sigma: float
    P: int
    delta_hat: int
    entry_bound_ok: bool
    reachability: list[ReachabilityCheck] = field(default_factory=list)
    window_norms: list[WindowNormCheck] = field(default_factory=list)
    vanishing_T: int = 0
    vanishing_norm: float = 1.0
    vanishing_ok: bool = False
    gamma_residual: float = float("inf")
    gamma_ok: bool = False
    identity_max_residual: float = float("inf")
    identity_ok: bool = False

    VANISHING_TOL = 1e-8
    GAMMA_TOL = 1e-8

    def failures(self) -> list[str]:
        out = []
        if not self.entry_bound_ok:
            out.append("entry bound: some nonzero augmented-matrix entry fell below sigma")
        for check in self.reachability:
            if not check.ok:
                out.append(
                    f"reachability: window {check.index} ([{check.start}, {check.end})) "
                    "does not connect the anchors to every sensor"
                )
        for check in self.window_norms:
            if not check.ok:
                out.append(
                    f"window norm: window {check.index} ([{check.start}, {check.end})) "
                    f"has product norm {check.norm} >= 1"
                )
        if not self.vanishing_ok:
            out.append(
                f"product vanishing: norm {self.vanishing_norm} at T={self.vanishing_T} "
                f"exceeds {self.VANISHING_TOL}"
            )
        if not self.gamma_ok:
            out.append(f"anchor-feed limit: residual {self.gamma_residual} exceeds {self.GAMMA_TOL}")
        if not self.identity_ok:
            out.append(
                f"anchor-feed identity: residual {self.identity_max_residual} exceeds {IDENTITY_TOL}"
            )
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()


def run_verification(
    matrices: SystemMatrices,
    schedule: AttackSchedule | None,
    gamma: float,
    P: int,
    T: int = 10000,
    max_windows: int | None = None,
    identity_samples: int = 10,
    seed: int = 0,
) -> VerificationReport:
    """Run every convergence check and collect the outcomes.

    Reachability is checked over every window of P consecutive onsets and
    product norms over every disjoint P-period window, as far as the
    schedule and T allow (clipped to max_windows when given).
    """
    sigma = sigma_bound(matrices, gamma)

    # Sample instants spanning active and dormant phases for the entry bound.
    entry_ok = True
    sample_ts = list(range(0, min(T, 32)))
    for t in sample_ts:
        values = augmented_at(schedule, matrices, gamma, t).values
        nonzero = values[values > 0.0]
        if nonzero.min() < sigma - 1e-15:
            entry_ok = False
            break

    report = VerificationReport(sigma=sigma, P=P, delta_hat=0, entry_bound_ok=entry_ok)

    if schedule is not None and schedule.num_periods() != 0:
        def window_bounds(first_onset: int, last_onset: int) -> tuple[int, int] | None:
            """Window [onset(first), onset(last)) if both onsets exist within T."""
            try:
                t0, t1 = schedule.onset(first_onset), schedule.onset(last_onset)
            except HorizonExceeded:
                return None
            return (t0, t1) if t1 <= T else None

        k = 0
        while max_windows is None or k < max_windows:
            bounds = window_bounds(k, k + P)
            if bounds is None:
                break
            rel = window_reachability(schedule, matrices, gamma, k, P)
            report.reachability.append(
                ReachabilityCheck(k, bounds[0], bounds[1], rel.anchor_reaches_all_sensors())
            )
            k += 1

        m = 0
        delta_hat = 0
        while max_windows is None or m < max_windows:
            bounds = window_bounds(m * P, (m + 1) * P)
            if bounds is None:
                break
            delta_hat = max(delta_hat, bounds[1] - bounds[0])
            try:
                norm = window_product_norm(schedule, matrices, gamma, m, P)
                ok = norm < 1.0
            except AnalysisError:
                norm, ok = 1.0, False
            report.window_norms.append(WindowNormCheck(m, bounds[0], bounds[1], norm, ok))
            m += 1
        report.delta_hat = delta_hat

    report.vanishing_T = T
    report.vanishing_norm = product_vanishing_check(schedule, matrices, gamma, T)
    report.vanishing_ok = report.vanishing_norm < VerificationReport.VANISHING_TOL

    try:
        report.gamma_residual = gamma_limit_check(
            schedule, matrices, gamma, T, identity_samples=0
        )
        report.gamma_ok = report.gamma_residual < VerificationReport.GAMMA_TOL
    except AnalysisError:
        report.gamma_ok = False

    rng = np.random.default_rng(seed)
    limit = exact_anchor_map(matrices)
    worst = 0.0
    for t in rng.integers(0, max(T, 1), size=identity_samples):
        worst = max(
            worst, anchor_feed_identity_residual(schedule, matrices, gamma, int(t), limit)
        )
    report.identity_max_residual = worst
    report.identity_ok = worst <= IDENTITY_TOL

    return report
