"""Experiment driver: simulate, optimize, detect, closed-loop and verify.

All inputs are JSON configuration documents and all outputs are CSV tables
or JSON results written under ``--output-dir``. Reruns with the same
configuration and seeds produce byte-identical files. ``ASENTINEL_THREADS``
bounds how many seeds of a closed-loop study run concurrently; results are
merged in seed order either way.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from asentinel.irrigation import (
    default_attack_schedule,
    run_closed_loop,
    scenario_from_json,
)
from asentinel.detector import DetectorBank
from asentinel.model import sample_rollout, system_from_json
from asentinel.objectives import (
    build_control_objective,
    build_detection_bound,
    control_form_diagnostics,
    expand_constraints,
)
from asentinel.optimizer import (
    ProblemKind,
    ProblemSpec,
    SolveStatus,
    solve,
)
from asentinel import verification


class CliError(Exception):
    """User-facing failure with an exit status."""

    def __init__(self, message: str, status: int = 2):
        super().__init__(message)
        self.status = status


@dataclass
class RunConfig:
    """Parsed invocation of one CLI command."""

    command: str
    system_path: str | None = None
    scenario_path: str | None = None
    formulation: str = "pure-control"
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "out"
    horizon: int = 10
    true_mode: int = 0
    steps: int | None = None
    mode: int = 0
    input_path: str | None = None
    jd_max: float | None = None
    jc_max: float | None = None
    restarts: int | None = None
    noise_scale: float = 1.0
    trace: bool = False
    diagnostics_path: str | None = None
    quick: bool = False


def parse_seeds(text: str) -> list:
    """Accept a single seed, a comma list, or a ``start:stop`` range."""
    text = text.strip()
    if ":" in text:
        start, stop = text.split(":", 1)
        lo, hi = int(start), int(stop)
        if hi <= lo:
            raise CliError(f"empty seed range {text!r}")
        return list(range(lo, hi))
    if "," in text:
        return [int(part) for part in text.split(",") if part.strip()]
    return [int(text)]


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, float) or isinstance(value, np.floating):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _load_system(config: RunConfig):
    if config.system_path is None:
        raise CliError("--system is required for this command")
    doc = _load_json(config.system_path)
    system, modes = system_from_json(doc)
    if modes is None:
        raise CliError(f"{config.system_path} carries no mode table")
    return doc, system, modes


def _load_input(config: RunConfig, p: int, horizon: int) -> np.ndarray:
    if config.input_path is None:
        return np.zeros(p * horizon)
    rows = []
    with open(config.input_path, newline="") as handle:
        for row in csv.reader(handle):
            if not row or row[0].startswith("#"):
                continue
            rows.append([float(v) for v in row])
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (horizon, p):
        raise CliError(f"input file must hold {horizon} rows of {p} values, "
                       f"got shape {arr.shape}")
    return arr.reshape(-1)


def cmd_simulate(config: RunConfig) -> int:
    _, system, modes = _load_system(config)
    if not 0 <= config.mode < modes.size:
        raise CliError(f"mode {config.mode} out of range (have {modes.size})")
    N = config.horizon
    u = _load_input(config, system.p, N)
    out = Path(config.output_dir)
    for seed in config.seeds:
        states, outputs = sample_rollout(system, modes.entry(config.mode), u,
                                         N, seed)
        header = (["k"] + [f"x{i}" for i in range(system.n)]
                  + [f"y{i}" for i in range(system.m)])
        rows = [[k] + list(states[k]) + list(outputs[k]) for k in range(N + 1)]
        _write_csv(out / f"rollout_mode{config.mode}_seed{seed}.csv",
                   header, rows)
    return 0


def _objective_pieces(doc: dict, system, modes, horizon: int):
    obj = doc.get("objective", {})
    Q = np.asarray(obj.get("Q", np.eye(system.m).tolist()), dtype=float)
    R = np.asarray(obj.get("R", np.eye(system.p).tolist()), dtype=float)
    reference = np.asarray(
        obj.get("reference", np.zeros(system.m * (horizon + 1)).tolist()),
        dtype=float).reshape(-1)
    cons_doc = doc.get("constraints")
    constraints = None
    if cons_doc is not None:
        constraints = expand_constraints(
            system, modes,
            np.asarray(cons_doc["Gx"], dtype=float),
            np.asarray(cons_doc["Gu"], dtype=float),
            np.asarray(cons_doc["g"], dtype=float),
            horizon)
    return Q, R, reference, constraints


def cmd_optimize(config: RunConfig) -> int:
    doc, system, modes = _load_system(config)
    N = config.horizon
    Q, R, reference, constraints = _objective_pieces(doc, system, modes, N)
    control_form = build_control_objective(system, modes, reference, Q, R, N)
    detection_form = build_detection_bound(system, modes, N)
    kind = ProblemKind(config.formulation)
    spec = ProblemSpec(kind=kind, control_form=control_form,
                       detection_form=detection_form, constraints=constraints,
                       jd_max=config.jd_max, jc_max=config.jc_max)
    solution = solve(spec, seed=config.seeds[0],
                     restarts=config.restarts or 16,
                     collect_trace=config.trace)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    slack = solution.side_constraint_slack
    result = {
        "formulation": kind.value,
        "status": solution.status.value,
        "objective_value": solution.objective_value,
        "constraint_violation": solution.constraint_violation,
        "side_constraint_slack": None if not np.isfinite(slack) else slack,
        "stationarity": solution.stationarity,
        "restarts_used": solution.restarts_used,
        "u": list(solution.u_star.u),
        "diagnostics": {k: (v if isinstance(v, (int, str, bool)) else float(v))
                        for k, v in solution.diagnostics.items()},
    }
    (out / "solution.json").write_text(json.dumps(result, indent=2,
                                                  allow_nan=True) + "\n")
    if config.trace and solution.trace:
        header = list(solution.trace[0].keys())
        rows = [[rec.get(col) for col in header] for rec in solution.trace]
        _write_csv(out / "trace.csv", header, rows)
    if config.diagnostics_path:
        dump = control_form_diagnostics(system, modes, reference, Q, R, N)
        Path(config.diagnostics_path).write_text(
            json.dumps(dump, indent=2) + "\n")
    if solution.status is SolveStatus.INFEASIBLE:
        print(f"infeasible: {solution.diagnostics}", file=sys.stderr)
        return 3
    return 0


def cmd_detect(config: RunConfig) -> int:
    _, system, modes = _load_system(config)
    N = config.horizon
    steps = config.steps if config.steps is not None else 3 * N
    if not 0 <= config.true_mode < modes.size:
        raise CliError(f"true mode {config.true_mode} out of range")
    u = _load_input(config, system.p, steps) if config.input_path else \
        np.tile(np.ones(system.p), steps)
    u = u.reshape(steps, system.p)

    seed = config.seeds[0]
    rng = np.random.default_rng(seed)
    from asentinel.model import psd_sqrt

    Lw = psd_sqrt(system.Hw, "Hw")
    Lv = psd_sqrt(system.Hv, "Hv")
    L0 = psd_sqrt(system.x0_cov, "x0_cov")
    x = system.x0_mean + L0 @ rng.standard_normal(system.n)
    bank = DetectorBank(system, modes, N)
    header = (["k", "detector_id"]
              + [f"mode_{i}" for i in range(modes.size)] + ["decision"])
    rows = []
    u_prev = None
    Bm = modes.input_matrices[config.true_mode]
    for k in range(steps):
        y = system.C @ x + Lv @ rng.standard_normal(system.m)
        decision = bank.step(y, u_prev)
        posts = bank.posteriors()
        for det_id in range(N):
            decided = ""
            if decision is not None and decision.detector_id == det_id:
                decided = decision.mode
            rows.append([k, det_id] + list(posts[det_id]) + [decided])
        x = system.A @ x + Bm @ u[k] + Lw @ rng.standard_normal(system.n)
        u_prev = u[k]
    out = Path(config.output_dir)
    _write_csv(out / f"detect_mode{config.true_mode}_seed{seed}.csv",
               header, rows)
    return 0


def _closed_loop_one(scenario, schedule, kind, seed, restarts, noise_scale):
    return run_closed_loop(scenario, schedule, kind, seed,
                           restarts=restarts, noise_scale=noise_scale)


def cmd_closed_loop(config: RunConfig) -> int:
    if config.scenario_path is None:
        raise CliError("--scenario is required for closed-loop runs")
    doc = _load_json(config.scenario_path)
    scenario, schedule = scenario_from_json(doc)
    if schedule is None:
        schedule = default_attack_schedule()
    kind = ProblemKind(config.formulation)
    restarts = config.restarts or 3
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    threads = max(1, int(os.environ.get("ASENTINEL_THREADS", "1")))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_closed_loop_one, scenario, schedule, kind,
                                   seed, restarts, config.noise_scale)
                       for seed in config.seeds]
            logs = [f.result() for f in futures]
    else:
        logs = [_closed_loop_one(scenario, schedule, kind, seed, restarts,
                                 config.noise_scale)
                for seed in config.seeds]

    tag = kind.value
    for seed, log in zip(config.seeds, logs):
        step_header = ["k", "minute", "true_mode", "level9", "level10",
                       "head8", "head9", "head10", "decision_detector",
                       "decision_mode"]
        by_step = {d.step: d for d in log.decisions}
        step_rows = []
        for k in range(log.minutes.size):
            dec = by_step.get(k)
            step_rows.append([
                k, log.minutes[k], int(log.true_modes[k]),
                log.levels[k, 0], log.levels[k, 1],
                log.applied[k, 0], log.applied[k, 1], log.applied[k, 2],
                dec.detector_id if dec else "", dec.mode if dec else "",
            ])
        _write_csv(out / f"run_{tag}_seed{seed}_steps.csv", step_header,
                   step_rows)
        win_header = ["window", "start_step", "solver_status", "fell_back",
                      "jc_expected", "jd_bound", "jc_realized",
                      "lin_violation", "max_expected_level",
                      "min_designed_head", "restarts_used"]
        win_rows = [[w.index, w.start_step, w.solver_status, w.fell_back,
                     w.jc_expected, w.jd_bound, w.jc_realized, w.lin_violation,
                     w.max_expected_level, w.min_designed_head,
                     w.restarts_used] for w in log.windows]
        _write_csv(out / f"run_{tag}_seed{seed}_windows.csv", win_header,
                   win_rows)
        lat_header = ["segment_start_minute", "mode", "latency_minutes"]
        lat_rows = [[a, mode, lat] for a, mode, lat in log.latencies]
        _write_csv(out / f"run_{tag}_seed{seed}_latency.csv", lat_header,
                   lat_rows)

    cost_header = ["seed", "jc_realized", "jd_bound", "jc_expected",
                   "expected_levels_ok", "heads_ok"]
    cost_rows = [[seed, log.jc_realized_total, log.jd_bound_total,
                  log.jc_expected_total, log.expected_levels_ok, log.heads_ok]
                 for seed, log in zip(config.seeds, logs)]
    _write_csv(out / f"costs_{tag}.csv", cost_header, cost_rows)
    _refresh_summary(out)
    return 0


def _read_costs(path: Path) -> dict:
    table = {}
    with path.open(newline="") as handle:
        for row in csv.DictReader(handle):
            table[int(row["seed"])] = (float(row["jc_realized"]),
                                       float(row["jd_bound"]))
    return table


def _refresh_summary(out: Path) -> None:
    """Normalize every present formulation against the plain-control runs."""
    base_path = out / "costs_pure-control.csv"
    if not base_path.exists():
        return
    base = _read_costs(base_path)
    rows = []
    for kind in ProblemKind:
        path = out / f"costs_{kind.value}.csv"
        if not path.exists():
            continue
        table = _read_costs(path)
        shared = sorted(set(table) & set(base))
        if not shared:
            continue
        jc_norm = [table[s][0] / base[s][0] for s in shared]
        jd_norm = [table[s][1] / base[s][1] for s in shared]
        for s, jc, jd in zip(shared, jc_norm, jd_norm):
            rows.append([kind.value, s, jc, jd])
        rows.append([kind.value, "mean", float(np.mean(jc_norm)),
                     float(np.mean(jd_norm))])
    _write_csv(out / "summary.csv",
               ["formulation", "seed", "jc_normalized", "jd_normalized"], rows)


def cmd_verify(config: RunConfig) -> int:
    checks = verification.run_all(quick=config.quick)
    width = max(len(c.name) for c in checks)
    failures = 0
    for check in checks:
        tag = "PASS" if check.passed else "FAIL"
        print(f"{tag}  {check.name.ljust(width)}  {check.detail}")
        failures += 0 if check.passed else 1
    print(f"{len(checks) - failures}/{len(checks)} oracle checks passed")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asentinel",
        description="Design inputs for, detect and study actuator-blocking "
                    "attacks on constrained linear plants.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(cmd):
        cmd.add_argument("--output-dir", default="out")
        cmd.add_argument("--seeds", default="0",
                         help="single seed, comma list, or start:stop range")

    sim = sub.add_parser("simulate", help="seeded noisy rollouts of one mode")
    common(sim)
    sim.add_argument("--system", required=True)
    sim.add_argument("--mode", type=int, default=0)
    sim.add_argument("--horizon", type=int, default=10)
    sim.add_argument("--input", dest="input_path",
                     help="CSV of one input row per step (default zeros)")

    opt = sub.add_parser("optimize", help="solve one input-design problem")
    common(opt)
    opt.add_argument("--system", required=True)
    opt.add_argument("--formulation", default="pure-control",
                     choices=[k.value for k in ProblemKind])
    opt.add_argument("--horizon", type=int, default=10)
    opt.add_argument("--jd-max", type=float, default=None)
    opt.add_argument("--jc-max", type=float, default=None)
    opt.add_argument("--restarts", type=int, default=None)
    opt.add_argument("--trace", action="store_true")
    opt.add_argument("--diagnostics", dest="diagnostics_path", default=None,
                     help="write objective coefficient dump to this JSON file")

    det = sub.add_parser("detect", help="run the detector bank on a rollout")
    common(det)
    det.add_argument("--system", required=True)
    det.add_argument("--horizon", type=int, default=10)
    det.add_argument("--true-mode", type=int, default=0)
    det.add_argument("--steps", type=int, default=None)
    det.add_argument("--input", dest="input_path",
                     help="CSV of one input row per step (default all ones)")

    loop = sub.add_parser("closed-loop", help="windowed design/apply/detect study")
    common(loop)
    loop.add_argument("--scenario", required=True)
    loop.add_argument("--formulation", default="pure-control",
                      choices=[k.value for k in ProblemKind])
    loop.add_argument("--restarts", type=int, default=None)
    loop.add_argument("--noise-scale", type=float, default=1.0)

    ver = sub.add_parser("verify", help="run every numerical oracle")
    ver.add_argument("--quick", action="store_true",
                     help="smaller statistical sample sizes")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(command=args.command)
    for name in ("output_dir", "formulation", "horizon", "true_mode", "steps",
                 "mode", "input_path", "jd_max", "jc_max", "restarts",
                 "noise_scale", "trace", "diagnostics_path", "quick"):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(config, name, getattr(args, name))
    if hasattr(args, "seeds"):
        config.seeds = parse_seeds(args.seeds)
    if hasattr(args, "system"):
        config.system_path = args.system
    if hasattr(args, "scenario"):
        config.scenario_path = args.scenario
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    handlers = {
        "simulate": cmd_simulate,
        "optimize": cmd_optimize,
        "detect": cmd_detect,
        "closed-loop": cmd_closed_loop,
        "verify": cmd_verify,
    }
    try:
        return handlers[config.command](config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
