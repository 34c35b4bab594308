"""Command-line front end.

Three subcommands: `run` drives one or both engines over a scenario and
schedule and exports per-iteration traces; `compare` runs both engines on
identical inputs and emits a side-by-side summary; `verify` executes the
convergence-theory check battery. All report paths write figures next to
the delimited output. Outputs are byte-deterministic for a fixed spec and
seed.

Exit codes: 0 success, 1 check failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .analysis import run_verification, product_norm_history
from .attack import (
    AttackSchedule,
    ScheduleError,
    random_schedule,
    save_schedule,
    schedule_from_dict,
    validate_schedule_links,
)
from .localization import LocalizationError, RunTrace, run, write_trace_csv
from .network import (
    NetworkScenario,
    ScenarioError,
    anchor_to_sensor_distance_bound,
    build_system_matrices,
    discover_triangulation,
    scenario_from_dict,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


@dataclass
class ExperimentSpec:
    """Everything one CLI invocation needs, resolved from flags."""

    scenario: str
    schedule: str | None = None
    algorithm: str = "asdiloc"
    gamma: float | None = None
    max_iters: int = 10000
    tol: float = 1e-6
    seed: int = 0
    out_dir: str = "dilocsim-out"
    allow_invalid_schedule: bool = False
    dual_path_check: bool = False
    plot: bool = True
    use_random_schedule: bool = False
    stride: int = 3
    dwell: int = 1
    drop_probability: float = 0.5
    horizon: int | None = None


def _fmt(value: float) -> str:
    return format(value, ".17g")


def _load_json_input(path_str: str, kind: str) -> dict:
    """Read a JSON input, falling back to the bundled corpus by name."""
    path = Path(path_str)
    if path.exists():
        text = path.read_text()
    else:
        name = path_str if path_str.endswith(".json") else f"{path_str}.json"
        res = resources.files("dilocsim").joinpath("data", name)
        if res.is_file():
            text = res.read_text()
        else:
            raise FileNotFoundError(f"{kind} file not found: {path_str}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path_str}: not valid JSON ({exc})") from exc


def _load_scenario(spec: ExperimentSpec) -> NetworkScenario:
    data = _load_json_input(spec.scenario, "scenario")
    scenario = scenario_from_dict(data, allow_unit_gamma=spec.gamma == 1.0)
    if spec.gamma is not None:
        scenario = replace(scenario, gamma=spec.gamma, allow_unit_gamma=spec.gamma == 1.0)
    if scenario.triangulation is None:
        scenario = discover_triangulation(scenario)
    return scenario


def _load_schedule(spec: ExperimentSpec, scenario: NetworkScenario) -> AttackSchedule | None:
    if spec.use_random_schedule:
        horizon = spec.horizon if spec.horizon is not None else spec.max_iters + 1
        schedule = random_schedule(
            spec.seed, scenario, horizon, spec.stride, spec.dwell, spec.drop_probability
        )
    elif spec.schedule:
        data = _load_json_input(spec.schedule, "schedule")
        schedule = schedule_from_dict(
            data, scenario=scenario, allow_invalid=spec.allow_invalid_schedule
        )
    else:
        return None
    validate_schedule_links(schedule, scenario)
    return schedule


def _execute_runs(
    spec: ExperimentSpec,
    scenario: NetworkScenario,
    schedule: AttackSchedule | None,
    algorithms: list[str],
) -> dict[str, RunTrace]:
    matrices = build_system_matrices(scenario)
    return {
        alg: run(
            scenario,
            alg,
            schedule,
            max_iters=spec.max_iters,
            tol=spec.tol,
            matrices=matrices,
            dual_path_check=spec.dual_path_check,
        )
        for alg in algorithms
    }


def _write_common_outputs(
    spec: ExperimentSpec,
    scenario: NetworkScenario,
    schedule: AttackSchedule | None,
    traces: dict[str, RunTrace],
    out: Path,
) -> dict:
    for alg, trace in traces.items():
        write_trace_csv(trace, out / f"trace_{alg}.csv")
    if schedule is not None and schedule.generator == "random":
        save_schedule(schedule, out / "schedule_resolved.json")
    summary = {
        "scenario": spec.scenario,
        "schedule": "random" if spec.use_random_schedule else spec.schedule,
        "gamma": scenario.gamma,
        "max_iters": spec.max_iters,
        "tol": spec.tol,
        "seed": spec.seed,
        "runs": [
            {
                "algorithm": alg,
                "converged_at": trace.converged_at,
                "final_max_error": trace.final_error,
                "iterations": trace.iterations,
            }
            for alg, trace in traces.items()
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if spec.plot:
        from . import plots

        for alg, trace in traces.items():
            plots.plot_trajectories(
                trace, scenario, out / f"trajectories_{alg}.png", title=alg
            )
        plots.plot_error_curves(traces, out / "errors.png")
    return summary


def cmd_run(spec: ExperimentSpec) -> int:
    """Run the selected engine(s); write traces, summary, and figures."""
    scenario = _load_scenario(spec)
    schedule = _load_schedule(spec, scenario)
    algorithms = ["diloc", "asdiloc"] if spec.algorithm == "both" else [spec.algorithm]
    traces = _execute_runs(spec, scenario, schedule, algorithms)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = _write_common_outputs(spec, scenario, schedule, traces, out)
    for entry in summary["runs"]:
        print(
            f"{entry['algorithm']}: converged_at={entry['converged_at']} "
            f"final_max_error={_fmt(entry['final_max_error'])}"
        )
    return EXIT_OK


def cmd_compare(spec: ExperimentSpec) -> int:
    """Run both engines on identical inputs and emit a side-by-side summary."""
    scenario = _load_scenario(spec)
    schedule = _load_schedule(spec, scenario)
    traces = _execute_runs(spec, scenario, schedule, ["diloc", "asdiloc"])
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_common_outputs(spec, scenario, schedule, traces, out)
    lines = ["algorithm,converged_at,final_max_error"]
    for alg, trace in traces.items():
        converged = "" if trace.converged_at is None else str(trace.converged_at)
        lines.append(f"{alg},{converged},{_fmt(trace.final_error)}")
    (out / "compare.csv").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_verify(spec: ExperimentSpec) -> int:
    """Run the convergence-theory checks; exit 0 only when every check passes."""
    scenario = _load_scenario(spec)
    schedule = _load_schedule(spec, scenario)
    matrices = build_system_matrices(scenario)
    P = anchor_to_sensor_distance_bound(scenario)
    gamma = scenario.gamma
    T = spec.max_iters
    report = run_verification(
        matrices, schedule, gamma, P, T=T, identity_samples=10, seed=spec.seed
    )

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    reach_fail = sum(1 for c in report.reachability if not c.ok)
    norm_fail = sum(1 for c in report.window_norms if not c.ok)
    max_norm = max((c.norm for c in report.window_norms), default=0.0)
    lines = [
        "verification report",
        f"scenario: {spec.scenario}",
        f"schedule: {'random' if spec.use_random_schedule else spec.schedule}",
        f"gamma: {_fmt(gamma)}",
        f"sigma (entrywise lower bound): {_fmt(report.sigma)}",
        f"P (anchor-to-sensor hop bound): {report.P}",
        f"delta_hat (max window length): {report.delta_hat}",
        f"entry bound ok: {report.entry_bound_ok}",
        f"reachability windows checked: {len(report.reachability)}, failures: {reach_fail}",
        f"window norms checked: {len(report.window_norms)}, max: {_fmt(max_norm)}, failures: {norm_fail}",
        f"product norm at T={T}: {_fmt(report.vanishing_norm)}",
        f"anchor-feed residual at T={T}: {_fmt(report.gamma_residual)}",
        f"anchor-feed identity max residual: {_fmt(report.identity_max_residual)}",
        f"RESULT: {'PASS' if report.passed else 'FAIL'}",
    ]
    (out / "report.txt").write_text("\n".join(lines) + "\n")

    rows = ["section,index,start,end,value,ok"]
    for c in report.reachability:
        rows.append(f"reachability,{c.index},{c.start},{c.end},,{int(c.ok)}")
    for c in report.window_norms:
        rows.append(f"window_norm,{c.index},{c.start},{c.end},{_fmt(c.norm)},{int(c.ok)}")
    (out / "report.csv").write_text("\n".join(rows) + "\n")

    if spec.plot:
        from . import plots

        if report.window_norms:
            plots.plot_window_norms(report.window_norms, out / "verify_norms.png")
        history = product_norm_history(
            schedule, matrices, gamma, T, sample_every=max(1, T // 200)
        )
        plots.plot_product_decay(history, out / "verify_decay.png")

    for line in lines:
        print(line)
    if not report.passed:
        print(f"first failing check: {report.failures()[0]}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dilocsim",
        description=(
            "Distributed barycentric-coordinate sensor localization under "
            "denial-of-service attack schedules"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--scenario", required=True,
        help="scenario JSON path, or a bundled name (example1)",
    )
    common.add_argument(
        "--schedule", default=None,
        help="schedule JSON path, or a bundled name (strategy1, strategy2); omit for attack-free",
    )
    common.add_argument(
        "--random-schedule", action="store_true", dest="use_random_schedule",
        help="generate a random schedule from --seed/--stride/--dwell/--drop-prob",
    )
    common.add_argument("--stride", type=int, default=3, help="random schedule: period spacing")
    common.add_argument("--dwell", type=int, default=1, help="random schedule: active instants per period minus 1")
    common.add_argument("--drop-prob", type=float, default=0.5, dest="drop_probability",
                        help="random schedule: per-arc denial probability")
    common.add_argument("--horizon", type=int, default=None,
                        help="random schedule coverage (default: max-iters + 1)")
    common.add_argument("--gamma", type=float, default=None, help="override the scenario's gain")
    common.add_argument("--max-iters", type=int, default=10000)
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="dilocsim-out", dest="out_dir", help="output directory")
    common.add_argument("--allow-invalid-schedule", action="store_true",
                        help="accept schedules without dormant gaps (stress tests only)")
    common.add_argument("--dual-path-check", action="store_true",
                        help="cross-check every abandonment update against the matrix form")
    common.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                        help="render figures next to the CSV output")

    p_run = sub.add_parser("run", parents=[common], help="run one or both engines")
    p_run.add_argument("--algorithm", choices=["diloc", "asdiloc", "both"], default="asdiloc")

    sub.add_parser("compare", parents=[common], help="run both engines side by side")
    sub.add_parser("verify", parents=[common], help="run the convergence checks")

    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    return ExperimentSpec(
        scenario=args.scenario,
        schedule=args.schedule,
        algorithm=getattr(args, "algorithm", "asdiloc"),
        gamma=args.gamma,
        max_iters=args.max_iters,
        tol=args.tol,
        seed=args.seed,
        out_dir=args.out_dir,
        allow_invalid_schedule=args.allow_invalid_schedule,
        dual_path_check=args.dual_path_check,
        plot=args.plot,
        use_random_schedule=args.use_random_schedule,
        stride=args.stride,
        dwell=args.dwell,
        drop_probability=args.drop_probability,
        horizon=args.horizon,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    spec = spec_from_args(args)
    commands = {"run": cmd_run, "compare": cmd_compare, "verify": cmd_verify}
    try:
        return commands[args.command](spec)
    except (ScenarioError, ScheduleError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except LocalizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
