import math

import numpy as np
import pytest

import dilocsim as d
from dilocsim.localization import trace_rows
from helpers import in_triangle_oracle

S3 = math.sqrt(3.0)


def state_of(scenario, mapping=None):
    if mapping is None:
        return d.default_initial_state(scenario)
    return d.EstimateState(0, {sid: d.Point2(*xy) for sid, xy in mapping.items()})


class TestExactSolution:
    def test_fixed_point_oracle(self, example1, example1_matrices):
        # independent oracle: iterate the unit-gain neighbor combination for
        # 1e4 steps from the origin, using plain numpy only
        m = example1_matrices
        p_a = m.anchor_positions
        combined = np.hstack([m.F, m.H])
        estimates = np.zeros((len(m.sensor_ids), 2))
        for _ in range(10000):
            estimates = combined @ np.vstack([p_a, estimates])
        solution = d.exact_solution(m)
        for k, sid in enumerate(m.sensor_ids):
            assert math.hypot(*(np.array(solution[sid].as_tuple()) - estimates[k])) <= 1e-8
            # and the solution is the ground truth
            assert d.distance(solution[sid], example1.position(sid)) <= 1e-8

    def test_all_anchor_sensor_is_direct_combination(self):
        sc = d.NetworkScenario(
            anchors=((1, d.Point2(1.0, S3)), (2, d.Point2(0, 0)), (3, d.Point2(2, 0))),
            sensors=((4, d.Point2(0.9, 0.7)),),
            triangulation={4: (1, 2, 3)},
            gamma=0.5,
        )
        m = d.build_system_matrices(sc)
        expected = m.F[0] @ m.anchor_positions
        got = d.exact_solution(m)[4]
        assert np.allclose(got.as_tuple(), expected, atol=1e-12)

    def test_translation_invariance(self, example1):
        shift = (3.25, -1.5)
        moved = d.NetworkScenario(
            anchors=tuple((i, d.Point2(p.x + shift[0], p.y + shift[1])) for i, p in example1.anchors),
            sensors=tuple((i, d.Point2(p.x + shift[0], p.y + shift[1])) for i, p in example1.sensors),
            triangulation=example1.triangulation,
            gamma=example1.gamma,
        )
        base = d.exact_solution(d.build_system_matrices(example1))
        shifted = d.exact_solution(d.build_system_matrices(moved))
        for sid in base:
            assert shifted[sid].x == pytest.approx(base[sid].x + shift[0], abs=1e-9)
            assert shifted[sid].y == pytest.approx(base[sid].y + shift[1], abs=1e-9)

    def test_singular_system_raises(self, example1_matrices):
        # a row-stochastic H (no anchor mass anywhere) makes I - H singular
        m = example1_matrices
        bad_h = np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]], dtype=float)
        broken = d.SystemMatrices(
            F=np.zeros((4, 3)),
            H=bad_h,
            anchor_ids=m.anchor_ids,
            sensor_ids=m.sensor_ids,
            anchor_positions=np.array(m.anchor_positions),
            triangulation=m.triangulation,
            neighbor_weights=m.neighbor_weights,
        )
        with pytest.raises(d.SingularSystem):
            d.exact_solution(broken)


class TestStepFunctions:
    def test_unit_gain_reduces_to_pure_combination(self, example1, example1_matrices):
        state = state_of(example1, {4: (0.3, 0.3), 5: (1.2, 0.4), 6: (0.9, 1.0), 7: (1.1, 0.5)})
        new = d.diloc_step(state, example1_matrices, gamma=1.0)
        pos = {**example1_matrices.anchor_xy, **{s: p.as_tuple() for s, p in state.estimates.items()}}
        for sid, nbrs in example1_matrices.neighbor_weights.items():
            expected = np.sum([w * np.array(pos[r]) for r, w in nbrs], axis=0)
            assert np.allclose(new.estimates[sid].as_tuple(), expected, atol=1e-12)

    def test_full_denial_freezes_classic_update(self, example1, example1_matrices):
        state = state_of(example1)
        mask = d.DenialMask({4: frozenset({2, 5, 7})})
        new = d.diloc_step(state, example1_matrices, 0.5, mask)
        assert new.estimates[4] == state.estimates[4]
        assert new.estimates[5] != state.estimates[5]

    def test_partial_denial_still_updates_classic(self, example1, example1_matrices):
        state = state_of(example1, {4: (0.5, 0.3), 5: (1.4, 0.5), 6: (0.8, 1.1), 7: (1.0, 0.6)})
        mask = d.DenialMask({4: frozenset({2})})
        new = d.diloc_step(state, example1_matrices, 0.5, mask)
        assert new.estimates[4] != state.estimates[4]

    def test_single_denied_link_freezes_abandonment(self, example1, example1_matrices):
        state = state_of(example1)
        mask = d.DenialMask({4: frozenset({2})})  # two live links remain
        new = d.asdiloc_step(state, example1_matrices, 0.5, mask)
        assert new.estimates[4] == state.estimates[4]
        assert new.estimates[5] != state.estimates[5]

    def test_engines_coincide_without_attacks(self, example1, example1_matrices):
        state = state_of(example1, {4: (0.5, 0.3), 5: (1.4, 0.5), 6: (0.8, 1.1), 7: (1.0, 0.6)})
        a = d.diloc_step(state, example1_matrices, 0.5)
        b = d.asdiloc_step(state, example1_matrices, 0.5)
        assert a == b  # bit-identical, same arithmetic path

    def test_gamma_range_enforced(self, example1, example1_matrices):
        state = state_of(example1)
        with pytest.raises(ValueError):
            d.diloc_step(state, example1_matrices, 0.0)
        with pytest.raises(ValueError):
            d.asdiloc_step(state, example1_matrices, 1.0)
        d.diloc_step(state, example1_matrices, 1.0)  # unit gain allowed classically


class TestMaskedMatrices:
    def test_empty_mask_identity(self, example1_matrices):
        m = example1_matrices
        mm = d.masked_matrices(m, d.EMPTY_MASK, 0.5)
        assert np.array_equal(mm.F_t, m.F)
        assert np.array_equal(mm.H_t, m.H)
        assert np.allclose(mm.N_t, 1.0, atol=1e-12)
        assert np.allclose(mm.Q_t, 0.5 * np.eye(4) + 0.5 * m.H, atol=1e-15)
        mm.validate(0.5)

    def test_all_denied(self, example1_matrices):
        m = example1_matrices
        mask = d.DenialMask({sid: frozenset(m.triangulation[sid]) for sid in m.sensor_ids})
        mm = d.masked_matrices(m, mask, 0.5)
        assert np.array_equal(mm.Q_t, np.eye(4))
        assert np.all(mm.F_t == 0.0)
        assert np.all(mm.N_t == 0.0)
        mm.validate(0.5)

    def test_strategy1_onset_masks_one_row(self, strategy1, example1, example1_matrices):
        # hand expansion: only the row of sensor 4 is zeroed, so its Q row is
        # the unit row e_1 and every other row keeps the unmasked form
        m = example1_matrices
        mask = d.denial_mask(strategy1, example1, 0)
        mm = d.masked_matrices(m, mask, 0.5)
        row4 = m.row_of(4)
        unit = np.zeros(4)
        unit[row4] = 1.0
        assert np.array_equal(mm.Q_t[row4], unit)
        assert np.all(mm.F_t[row4] == 0.0)
        others = [k for k in range(4) if k != row4]
        full = d.masked_matrices(m, d.EMPTY_MASK, 0.5)
        assert np.array_equal(mm.Q_t[others], full.Q_t[others])
        assert np.array_equal(mm.F_t[others], m.F[others])

    def test_rows_all_or_nothing(self, strategy2, example1, example1_matrices):
        m = example1_matrices
        combined = m.stacked()
        for t in range(12):
            mask = d.denial_mask(strategy2, example1, t)
            mm = d.masked_matrices(m, mask, 0.5)
            masked_combined = np.hstack([mm.F_t, mm.H_t])
            for k in range(4):
                row = masked_combined[k]
                assert np.array_equal(row, combined[k]) or np.all(row == 0.0)
            assert np.allclose(mm.N_t, masked_combined.sum(axis=1), atol=1e-15)
            mm.validate(0.5)


class TestStepEquivalence:
    def test_scalar_vs_matrix_random_masks(self, example1, example1_matrices):
        rng = np.random.default_rng(11)
        m = example1_matrices
        state = state_of(example1)
        arcs = d.scenario_arcs(example1)
        for step in range(200):
            links = [a for a in arcs if rng.random() < 0.4]
            denied = {}
            for j, i in links:
                denied.setdefault(i, set()).add(j)
            mask = d.DenialMask({i: frozenset(v) for i, v in denied.items()})
            scalar = d.asdiloc_step(state, m, 0.5, mask)
            matrix = d.asdiloc_matrix_step(state, m, 0.5, mask)
            for sid in m.sensor_ids:
                assert abs(scalar.estimates[sid].x - matrix.estimates[sid].x) <= 1e-12
                assert abs(scalar.estimates[sid].y - matrix.estimates[sid].y) <= 1e-12
            state = scalar

    def test_dual_path_mode_runs_clean(self, example1, strategy2):
        trace = d.run(example1, "asdiloc", strategy2, max_iters=300, dual_path_check=True)
        assert trace.converged_at is not None


class TestRun:
    def test_attack_free_runs_identical_and_converge(self, example1):
        a = d.run(example1, "diloc", None)
        b = d.run(example1, "asdiloc", None)
        assert a.converged_at is not None and a.converged_at == b.converged_at
        assert a.states == b.states  # bitwise identical trajectories
        assert a.errors == b.errors

    def test_attack_free_error_monotone_then_tiny(self, example1):
        trace = d.run(example1, "asdiloc", None, max_iters=10000, stop_on_convergence=False)
        errors = trace.errors
        assert all(errors[k + 1] <= errors[k] + 1e-15 for k in range(len(errors) - 1))
        assert errors[-1] < 1e-8

    def test_gamma_invariance_of_fixed_point(self, example1):
        finals = []
        for gamma in (0.1, 0.5, 0.9):
            trace = d.run(example1, "asdiloc", None, gamma=gamma, tol=1e-9)
            assert trace.converged_at is not None
            finals.append(trace.states[-1].estimates)
        for sid in example1.sensor_ids:
            spread = max(
                d.distance(finals[a][sid], finals[b][sid])
                for a in range(3)
                for b in range(a + 1, 3)
            )
            assert spread < 2e-9

    def test_confinement_in_anchor_hull(self, example1, strategy2):
        anchors = [p.as_tuple() for _, p in example1.anchors]
        trace = d.run(example1, "asdiloc", strategy2, max_iters=400, stop_on_convergence=False)
        for state in trace.states:
            for p in state.estimates.values():
                assert in_triangle_oracle(p.as_tuple(), *anchors, slack=1e-12)

    def test_converged_at_is_first_below_tol(self, example1, strategy2):
        trace = d.run(example1, "asdiloc", strategy2, tol=1e-4, stop_on_convergence=False,
                      max_iters=2000)
        t = trace.converged_at
        assert t is not None
        assert trace.errors[t] < 1e-4
        assert all(e >= 1e-4 for e in trace.errors[:t])

    def test_random_schedules_converge(self, example1):
        for seed in range(5):
            sched = d.random_schedule(seed, example1, horizon=50000, stride=3, dwell=1,
                                      drop_probability=0.6)
            trace = d.run(example1, "asdiloc", sched, max_iters=50000)
            assert trace.converged_at is not None

    def test_classic_converges_under_all_or_none_denial(self, example1):
        # every active instant denies either all three in-links of a sensor
        # or none of them: the one attack pattern the classic engine survives
        rng = np.random.default_rng(17)
        tri = example1.triangulation
        periods = []
        for k in range(4000):
            links = []
            for sid in example1.sensor_ids:
                if rng.random() < 0.5:
                    links.extend((j, sid) for j in tri[sid])
            periods.append(d.AttackPeriod.uniform(3 * k, 1, links))
        sched = d.AttackSchedule(periods, horizon=12000)
        trace = d.run(example1, "diloc", sched, max_iters=10000)
        assert trace.converged_at is not None

    def test_nonfinite_guard_aborts(self, example1):
        huge = state_of(example1, {4: (1e13, 0.0), 5: (1.4, 0.5), 6: (0.8, 1.1), 7: (1.0, 0.6)})
        with pytest.raises(d.NonFinite):
            d.run(example1, "asdiloc", None, initial=huge, max_iters=10)

    def test_initial_estimates_override(self, example1):
        pinned = d.NetworkScenario(
            anchors=example1.anchors,
            sensors=example1.sensors,
            triangulation=example1.triangulation,
            gamma=example1.gamma,
            initial_estimates={4: d.Point2(0.9, 0.8)},
        )
        state = d.default_initial_state(pinned)
        assert state.estimates[4] == d.Point2(0.9, 0.8)
        centroid = d.Point2(1.0, S3 / 3.0)
        assert d.distance(state.estimates[5], centroid) < 1e-12

    def test_unknown_algorithm_rejected(self, example1):
        with pytest.raises(ValueError, match="algorithm"):
            d.run(example1, "dilocc")

    def test_step_rule_stops_without_ground_truth(self, example1):
        trace = d.run(example1, "asdiloc", None, stop_rule="step", tol=1e-9)
        t = trace.converged_at
        assert t is not None
        last, prev = trace.states[t].estimates, trace.states[t - 1].estimates
        delta = max(
            max(abs(last[s].x - prev[s].x), abs(last[s].y - prev[s].y)) for s in last
        )
        assert delta < 1e-9
        # attack-free, a tiny step means the estimate is genuinely close
        assert trace.errors[t] < 1e-6

    def test_step_rule_triggers_on_fully_frozen_instant(self, example1):
        # every in-link denied: the update is the identity below tol, which
        # the successive-difference rule cannot distinguish from convergence
        arcs = d.scenario_arcs(example1)
        sched = d.AttackSchedule([d.AttackPeriod.uniform(0, 0, arcs)])
        trace = d.run(example1, "asdiloc", sched, stop_rule="step", tol=1e-6)
        assert trace.converged_at == 1
        assert trace.errors[1] > 1e-2  # nowhere near the exact solution

    def test_unknown_stop_rule_rejected(self, example1):
        with pytest.raises(ValueError, match="stop_rule"):
            d.run(example1, "asdiloc", None, stop_rule="difference")


class TestTraceCsv:
    def test_roundtrip_exact(self, tmp_path, example1, strategy2):
        trace = d.run(example1, "asdiloc", strategy2, max_iters=50, stop_on_convergence=False)
        path = tmp_path / "trace.csv"
        d.write_trace_csv(trace, path)
        assert d.read_trace_csv(path) == list(trace_rows(trace))

    def test_masked_column_marks_denied_sensors(self, tmp_path, example1, strategy1):
        trace = d.run(example1, "asdiloc", strategy1, max_iters=10, stop_on_convergence=False)
        path = tmp_path / "trace.csv"
        d.write_trace_csv(trace, path)
        rows = d.read_trace_csv(path)
        by_key = {(r[0], r[1]): r[5] for r in rows}
        assert by_key[(0, 4)] == 1  # sensor 4 denied at the onset instant
        assert by_key[(0, 5)] == 0
        assert by_key[(1, 7)] == 1  # sensor 7 denied at the second instant
        assert by_key[(2, 4)] == 0  # dormant
