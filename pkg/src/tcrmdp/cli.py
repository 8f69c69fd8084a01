"""Command-line experiment runner: ``tcrmdp {solve,train,eval,check}``.

Every command writes ``results.csv``, ``summary.json`` and ``report.json`` into
the output directory.  Wall-clock timings go to ``timing.json`` only, so the
other files are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import operators as ops
from .checks import contraction_sweep, drift_bound_sweep, drifted_copy
from .evaluation import (
    RolloutConfig,
    as_oracle,
    normalize_score,
    reference_agents,
    schedule_sweep,
    static_grid_eval,
    tc_worst_case_eval,
    write_json,
    write_results_csv,
)
from .model import ConfigError, ContractViolation, ModelValidationError
from .operators import BackupMode
from .policies import ObsClass
from .schedules import Schedule
from .solvers import (
    NonConvergenceError,
    adversary_best_response,
    alternating_train,
    extract_oracle_policy,
    greedy_policy,
    solve_nominal,
    solve_param,
    solve_rect,
    solve_tc,
    worst_by_start,
)
from .theory import DriftViolation, TheoryChainFamily, sequence_from_schedule

log = logging.getLogger("tcrmdp")
SCHEMA_VERSION = 1


class CheckFailed(RuntimeError):
    pass


def _header(cfg: cfgmod.ExperimentConfig, command: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": cfg.hash(),
        "seeds": list(cfg.seeds),
    }


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def cmd_solve(cfg: cfgmod.ExperimentConfig, out: Path, workers: int) -> dict:
    mdp = cfgmod.build_model(cfg)
    s = cfg.solver
    eps, iters = s.epsilon, s.max_iters
    mode = BackupMode(s.mode)
    extra = {}
    if s.operator == "tc":
        ball = cfgmod.build_ball(cfg, mdp)
        v, report = solve_tc(mdp, ball, mode, eps, iters)
        agent, adversary = extract_oracle_policy(v, mdp, ball, mode)
        adversary.to_csv(out / "adversary.csv")
        extra["radius_cells"] = ball.radius_cells
    else:
        if s.operator == "nominal":
            centre = mdp.grid.nearest(np.full(mdp.grid.dims, 0.5))
            v, report = solve_nominal(mdp, centre, eps, iters)
            q = mdp.reward + mdp.gamma * (mdp.kernels[centre] @ v)
            extra["psi_index"] = centre
        elif s.operator == "rect":
            v, report = solve_rect(mdp, eps, iters)
            q = ops.param_payoffs(v, mdp).min(axis=2)
        else:
            v, report = solve_param(mdp, mode, eps, iters)
            q = ops.param_payoffs(v, mdp).min(axis=2)
        agent = greedy_policy(q, ObsClass.VANILLA)
    ops.to_csv(v, out / "values.csv")
    agent.to_csv(out / "policy.csv")
    vv = np.atleast_2d(v.T).T
    rows = [[st, float(vv[st].min()), float(vv[st].mean()), float(vv[st].max())] for st in range(vv.shape[0])]
    _write_csv(out / "results.csv", ["state", "value_min_psi", "value_mean_psi", "value_max_psi"], rows)
    summary = {**_header(cfg, "solve"), "operator": s.operator, "mode": s.mode, **extra}
    summary["value_min"] = float(vv.min())
    summary["value_max"] = float(vv.max())
    write_json(summary, out / "summary.json")
    write_json({**_header(cfg, "solve"), "solve_report": report.to_dict(include_time=False)}, out / "report.json")
    return {"solve": report.wall_time}


def cmd_train(cfg: cfgmod.ExperimentConfig, out: Path, workers: int) -> dict:
    mdp = cfgmod.build_model(cfg)
    ball = cfgmod.build_ball(cfg, mdp)
    s = cfg.solver
    rows, traces, timing, per_class = [], {}, {}, {}
    for cls in s.classes:
        t0 = time.perf_counter()
        agent, trace = alternating_train(cls, s.rounds, mdp, ball, s.epsilon)
        _, W, _ = adversary_best_response(agent, mdp, ball, s.epsilon)
        per = worst_by_start(W, agent, mdp)
        timing[cls] = time.perf_counter() - t0
        agent.to_csv(out / f"policy_{cls}.csv")
        traces[cls] = [asdict(r) for r in trace]
        per_class[cls] = per
        rows += [[cls, st, float(per[st])] for st in range(mdp.n_states)]
    _write_csv(out / "results.csv", ["class", "start_state", "worst_value"], rows)
    ordering = {}
    present = [c for c in ("vanilla", "stacked", "oracle") if c in per_class]
    for lo, hi in zip(present[:-1], present[1:]):
        ordering[f"{lo}<={hi}"] = bool(np.all(per_class[lo] <= per_class[hi] + 1e-4))
    summary = {
        **_header(cfg, "train"),
        "radius_cells": ball.radius_cells,
        "rounds": s.rounds,
        "worst_value": {c: float(v.min()) for c, v in per_class.items()},
        "information_ordering": ordering,
    }
    write_json(summary, out / "summary.json")
    write_json({**_header(cfg, "train"), "traces": traces}, out / "report.json")
    return timing


def cmd_eval(cfg: cfgmod.ExperimentConfig, out: Path, workers: int) -> dict:
    mdp = cfgmod.build_model(cfg)
    ball = cfgmod.build_ball(cfg, mdp)
    e, sch = cfg.eval, cfg.schedule
    agents = {k: as_oracle(a, mdp) for k, a in reference_agents(mdp, ball, cfg.solver.epsilon).items()}
    rows, details, timing = [], {}, {}
    scores: dict[tuple[str, str], dict[str, float]] = {}
    for seed in cfg.seeds:
        rc = RolloutConfig(e.horizon, e.episodes, seed, e.discounted, e.start_state)
        for name, agent in agents.items():
            t0 = time.perf_counter()
            if "tc_worst" in e.protocols:
                res = tc_worst_case_eval(agent, mdp, e.radius, rc, cfg.solver.epsilon)
                rows.append({"protocol": "tc_worst", "agent": name, "seed": seed, **res.row()})
                details[f"tc_worst/{name}/{seed}"] = res.to_dict()
                scores.setdefault(("tc_worst", "dp_mean"), {})[name] = res.extra["dp_mean"]
                scores.setdefault(("tc_worst", f"mc_seed{seed}"), {})[name] = res.mean
            if "static" in e.protocols:
                st = static_grid_eval(agent, mdp, e.segments, rc, workers)
                for label, val in (("static_worst", st.worst), ("static_average", st.average)):
                    rows.append({"protocol": label, "agent": name, "seed": seed, "condition": label, "mean": val})
                    scores.setdefault((label, f"seed{seed}"), {})[name] = val
                _write_csv(
                    out / f"static_{name}_seed{seed}.csv",
                    ["index"] + [f"psi_{i + 1}" for i in range(mdp.grid.dims)] + ["mean", "sd", "n"],
                    [[p["index"], *p["psi"], p["mean"], p["sd"], p["n"]] for p in st.points],
                )
            if "schedules" in e.protocols:
                sweep = schedule_sweep(
                    agent, mdp, sch.kinds, rc, sch.radius, max(sch.horizon, e.horizon), sch.seed
                )
                for kind, res in sweep.items():
                    rows.append({"protocol": "schedule", "agent": name, "seed": seed, **res.row()})
                    scores.setdefault((f"schedule:{kind}", f"seed{seed}"), {})[name] = res.mean
            timing[f"{name}/seed{seed}"] = time.perf_counter() - t0
    write_results_csv(rows, out / "results.csv")
    norm_rows = []
    for (protocol, cond), vals in scores.items():
        for name, v in vals.items():
            try:
                score = normalize_score(v, vals["nominal"], vals["rectangular"])
            except ArithmeticError:
                score = None
            norm_rows.append([protocol, cond, name, v, "" if score is None else score])
    _write_csv(out / "normalized.csv", ["protocol", "condition", "agent", "raw", "normalized"], norm_rows)
    summary = {
        **_header(cfg, "eval"),
        "eval_radius_cells": cfgmod.build_ball(cfg, mdp, e.radius).radius_cells,
        "training_radius_cells": ball.radius_cells,
        "references": {"low": "nominal", "target": "rectangular"},
        "rows": rows,
    }
    write_json(summary, out / "summary.json")
    write_json({**_header(cfg, "eval"), "details": details}, out / "report.json")
    return timing


def cmd_check(cfg: cfgmod.ExperimentConfig, out: Path, workers: int) -> dict:
    c = cfg.check
    seed = cfg.seeds[0]
    t0 = time.perf_counter()
    if c.inject_drift:
        fam = TheoryChainFamily()
        seq = sequence_from_schedule(fam, Schedule("linear", 0.1, c.sequence_length), np.random.default_rng(seed))
        drifted_copy(seq).validate()  # raises DriftViolation
    contraction = contraction_sweep(seed, c.instances, c.pairs)
    t1 = time.perf_counter()
    sequences = drift_bound_sweep(seed, c.sequences, c.sequence_length, cfg.schedule.radius)
    t2 = time.perf_counter()
    rows = [["contraction", r.instance, f"{r.operator}/{r.mode}", r.worst_excess, r.passed] for r in contraction]
    rows += [["drift_bound", r.index, r.kind, r.worst_margin, r.passed] for r in sequences]
    _write_csv(out / "results.csv", ["suite", "case", "detail", "metric", "passed"], rows)
    n_fail = sum(not r.passed for r in contraction) + sum(not r.passed for r in sequences)
    summary = {
        **_header(cfg, "check"),
        "contraction": {"cases": len(contraction), "failed": sum(not r.passed for r in contraction)},
        "drift_bound": {
            "sequences": len(sequences),
            "failed": sum(not r.passed for r in sequences),
            "L_prime": {
                "gamma": 0.9,
                "L_P": sequences[0].L_P if sequences else None,
                "L_r": sequences[0].L_r if sequences else None,
            },
        },
        "all_passed": n_fail == 0,
    }
    write_json(summary, out / "summary.json")
    write_json(
        {
            **_header(cfg, "check"),
            "contraction": [asdict(r) for r in contraction],
            "drift_bound": [asdict(r) for r in sequences],
        },
        out / "report.json",
    )
    if n_fail:
        raise CheckFailed(f"{n_fail} property check(s) failed")
    return {"contraction": t1 - t0, "drift_bound": t2 - t1}


COMMANDS = {"solve": cmd_solve, "train": cmd_train, "eval": cmd_eval, "check": cmd_check}

EXIT_CODES = [
    (ConfigError, 2),
    (ModelValidationError, 2),
    (DriftViolation, 4),
    (CheckFailed, 5),
    (ContractViolation, 3),
    (NonConvergenceError, 6),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcrmdp", description="Time-constrained robust MDP experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML or JSON experiment config")
        p.add_argument("--out", help="output directory (overrides the config's 'output')")
        p.add_argument("--workers", type=int, default=1, help="worker processes for parallel sweeps")
        p.add_argument("--verbose", "-v", action="store_true")
    return parser


def _error_payload(exc: BaseException, command: str) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "command": command}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = None
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = cfgmod.load(args.config)
        out_dir = args.out or cfg.output
        if not out_dir:
            raise ConfigError("no output directory: pass --out or set 'output'")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log.info("running %s with config %s", args.command, cfg.hash())
        timing = COMMANDS[args.command](cfg, out, args.workers)
        write_json({"command": args.command, "seconds": timing}, out / "timing.json")
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes a structured error
        code = next((c for t, c in EXIT_CODES if isinstance(exc, t)), 1)
        payload = _error_payload(exc, args.command)
        print(json.dumps(payload), file=sys.stderr)
        if out is not None:
            write_json(payload, out / "error.json")
        if args.verbose:
            log.exception("command failed")
        return code


if __name__ == "__main__":
    sys.exit(main())
