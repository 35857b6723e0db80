"""Command-line entry point: ``seqmart {mztest,simulate,tangent,calibrate}``.

Exit status reports whether the command ran, never the statistical
decision: 0 on success, 1 on bad input data, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import ContingencyTable2x2, fisher_exact_two_sided, contingency_from_session
from .calibration import CalibrationSpec, GamblerParams, Scenario, compare_stopping_rules, run_calibration
from .core import InvalidObservationError, Tail, TestConfig, TrialArrays, build_trace, run_sequential_test, z_to_p
from .formats import (
    SCHEMA,
    CsvFormatError,
    dumps_report,
    read_steps_csv,
    read_trials_csv,
    sniff_kind,
    write_gambler_csv,
    write_session_csv,
    write_steps_csv,
    write_trace_csv,
    write_trials_csv,
    _write_rows,
)
from .simulators import (
    IblParams,
    WalkParams,
    WalkVariant,
    gambler_from_outcomes,
    gambler_trace,
    session_to_trials,
    simulate_fair_odds_gambler,
    simulate_ibl_session,
    simulate_walk,
)
from .tangent import InvalidDistributionError, gambler_tangent_steps, steps_from_trials, tangent_test_pvalue

SEED_ENV = "SEQMART_SEED"

SCENARIO_NAMES = {
    "ibl-blind": Scenario.IBL_BLIND,
    "ibl-visible": Scenario.IBL_VISIBLE,
    "walk-state-dependent": Scenario.WALK_STATE_DEPENDENT,
    "walk-sd": Scenario.WALK_STATE_DEPENDENT,
    "walk-self-phacking": Scenario.WALK_SELF_PHACKING,
    "walk-ph": Scenario.WALK_SELF_PHACKING,
    "gambler-fair-odds": Scenario.GAMBLER_FAIR_ODDS,
    "fair-odds": Scenario.GAMBLER_FAIR_ODDS,
}


class UsageError(Exception):
    pass


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _unit_open(s: str) -> float:
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {s}")
    return v


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def _seed(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0, got {s}")
    return v


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return _seed(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"{SEED_ENV}={env!r} is not a non-negative integer") from None
    return 0


def _report(command: str, argv: list[str], seed: Optional[int], **body) -> dict:
    # argv is the normalized replay command: running ``seqmart *argv`` reproduces the report
    return {"schema": SCHEMA, "tool_version": __version__, "command": command, "argv": argv, "seed": seed, **body}


def _emit(report: dict, out: Optional[str]):
    text = dumps_report(report)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _outcome_dict(outcome) -> dict:
    return {
        "status": outcome.status,
        "stop_index": outcome.stop_index,
        "s_at_stop": outcome.s_at_stop,
        "v_at_stop": outcome.v_at_stop,
        "z": outcome.z,
        "p_value": outcome.p_value,
        "diagnostics": outcome.diagnostics,
    }


def _fisher_from_trials(trials: TrialArrays) -> dict:
    vals = set(np.unique(np.concatenate([trials.b, trials.r])).tolist())
    if not vals <= {-1.0, 1.0}:
        raise UsageError("--baseline fisher needs b and r coded as +1/-1")
    a_pos, c_pos = trials.r > 0, trials.b > 0
    table = ContingencyTable2x2(int(np.sum(a_pos & c_pos)), int(np.sum(a_pos & ~c_pos)),
                                int(np.sum(~a_pos & c_pos)), int(np.sum(~a_pos & ~c_pos)))
    return {"test": "fisher_exact_two_sided", "table": table, "p_value": fisher_exact_two_sided(table)}


# ---------------------------------------------------------------------------
# mztest


def cmd_mztest(args) -> int:
    cfg = TestConfig(args.v_threshold, args.alpha, Tail(args.tail))
    trials = read_trials_csv(args.input)
    outcome = run_sequential_test(trials, cfg)
    argv = ["mztest", "--input", args.input, "--v-threshold", repr(args.v_threshold), "--alpha", repr(args.alpha),
            "--tail", args.tail]
    body = {"config": cfg, "n_trials": len(trials), "outcome": _outcome_dict(outcome)}
    if args.baseline == "fisher":
        argv += ["--baseline", "fisher"]
        body["baseline"] = _fisher_from_trials(trials)
    if args.emit_trace:
        argv += ["--emit-trace", args.emit_trace]
        n = len(trials) if outcome.stop_index is None else outcome.stop_index
        # trace of the analysed trials; trials past the stopping time are not part of the test
        write_trace_csv(args.emit_trace, build_trace(TrialArrays(trials.b[:n], trials.r[:n], trials.r_mean[:n], trials.r_var[:n])))
    _emit(_report("mztest", argv, None, **body), args.out)
    return 0


# ---------------------------------------------------------------------------
# simulate


def _sim_ibl(args, seed: int, out: Path) -> dict:
    params = IblParams(n_trials=args.trials, beta=args.beta, w_rho=args.w_rho, w_h=args.w_h, w_a=args.wa,
                       p_stim_match=args.p_stim, block_len_min=args.block_min, block_len_max=args.block_max,
                       seed=seed, reward_coding=args.reward_coding)
    session = simulate_ibl_session(params)
    trials = session_to_trials(session, params)
    write_session_csv(out / "session.csv", session)
    write_trials_csv(out / "trials.csv", trials)
    body = {"params": params, "files": ["session.csv", "trials.csv"], "reward_rate": session.reward_rate}
    if args.report:
        table = contingency_from_session(session)
        body["baseline"] = {"test": "fisher_exact_two_sided", "table": table, "p_value": fisher_exact_two_sided(table)}
        cfg = TestConfig(args.v_threshold, args.alpha, Tail.UPPER)
        body["mztest"] = {"config": cfg, "outcome": _outcome_dict(run_sequential_test(trials, cfg))}
    return body


def _write_gambler(traj, alpha: float, out: Path) -> list[str]:
    write_gambler_csv(out / "trajectory.csv", traj)
    write_trace_csv(out / "trace.csv", gambler_trace(traj, alpha))
    n = traj.stopped_at if traj.stopped_at is not None else len(traj)
    write_steps_csv(out / "steps.csv", traj.profits[:n], gambler_tangent_steps(traj, alpha))
    return ["trajectory.csv", "trace.csv", "steps.csv"]


def _gambler_summary(traj) -> dict:
    return {"stopped_at": traj.stopped_at, "capped": traj.capped,
            "final_cumulative": float(traj.cumulative[-1]) if len(traj) else 0.0}


def _sim_gambler(args, seed: int, out: Path) -> dict:
    rng = np.random.default_rng(seed)
    wins = rng.random(args.rounds) < args.alpha
    traj = gambler_from_outcomes(wins, 1.0 / args.alpha - 1.0)
    files = _write_gambler(traj, args.alpha, out)
    return {"params": {"alpha": args.alpha, "rounds": args.rounds}, "files": files, **_gambler_summary(traj)}


def _sim_fair_odds(args, seed: int, out: Path) -> dict:
    traj = simulate_fair_odds_gambler(args.alpha, np.random.default_rng(seed))
    files = _write_gambler(traj, args.alpha, out)
    return {"params": {"alpha": args.alpha}, "files": files, **_gambler_summary(traj)}


def _sim_walk(args, seed: int, out: Path) -> dict:
    variant = WalkVariant.STATE_DEPENDENT if args.scenario == "walk-sd" else WalkVariant.SELF_PHACKING
    params = WalkParams(variant, high_var=args.high_var, low_var=args.low_var, critical_z=args.critical_z,
                        n_steps=args.steps, v_threshold=args.v_threshold, seed=seed)
    trace = simulate_walk(params)
    write_trace_csv(out / "trace.csv", trace)
    return {"params": params, "files": ["trace.csv"], "n_entries": len(trace),
            "final_s": float(trace.s[-1]) if len(trace) else 0.0, "final_v": float(trace.v[-1]) if len(trace) else 0.0}


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = args.scenario
    argv = ["simulate", sc]
    if sc == "ibl":
        body = _sim_ibl(args, seed, out)
        argv += ["--trials", str(args.trials), "--beta", repr(args.beta), "--w-rho", repr(args.w_rho),
                 "--w-h", repr(args.w_h), "--wa", repr(args.wa), "--p-stim", repr(args.p_stim),
                 "--block-min", str(args.block_min), "--block-max", str(args.block_max),
                 "--reward-coding", args.reward_coding]
        if args.report:
            argv += ["--report", "--v-threshold", repr(args.v_threshold), "--alpha", repr(args.alpha)]
    elif sc == "gambler":
        body = _sim_gambler(args, seed, out)
        argv += ["--alpha", repr(args.alpha), "--rounds", str(args.rounds)]
    elif sc == "fair-odds":
        body = _sim_fair_odds(args, seed, out)
        argv += ["--alpha", repr(args.alpha)]
    else:
        if args.steps == 0 and args.v_threshold is None:
            raise UsageError("walk scenarios need --steps, --v-threshold, or both")
        body = _sim_walk(args, seed, out)
        argv += ["--steps", str(args.steps), "--high-var", repr(args.high_var), "--critical-z", repr(args.critical_z)]
        if args.low_var is not None:
            argv += ["--low-var", repr(args.low_var)]
        if args.v_threshold is not None:
            argv += ["--v-threshold", repr(args.v_threshold)]
    argv += ["--seed", str(seed), "--out", args.out]
    (out / "report.json").write_text(dumps_report(_report("simulate", argv, seed, scenario=sc, **body)), encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# tangent


def cmd_tangent(args) -> int:
    seed = _resolve_seed(args)
    argv = ["tangent", "--input", args.input, "--replicates", str(args.replicates), "--ties", args.ties]
    body = {}
    kind = sniff_kind(args.input)
    if kind == "trials":
        trials = read_trials_csv(args.input)
        n = len(trials)
        if args.v_threshold is not None:
            cfg = TestConfig(args.v_threshold, 0.05, Tail.UPPER)
            outcome = run_sequential_test(trials, cfg)
            if outcome.stop_index is not None:
                n = outcome.stop_index
            body["mztest"] = {"config": cfg, "outcome": _outcome_dict(outcome)}
            argv += ["--v-threshold", repr(args.v_threshold)]
        used = TrialArrays(trials.b[:n], trials.r[:n], trials.r_mean[:n], trials.r_var[:n])
        lo, hi = args.support
        argv += ["--support", repr(lo), repr(hi)]
        try:
            steps = steps_from_trials(used, (lo, hi))
        except InvalidDistributionError as exc:
            raise CsvFormatError(str(exc), args.input, None if exc.step is None else exc.step + 1) from None
        observed = float(build_trace(used).s[-1]) if n else 0.0
    else:
        x, steps = read_steps_csv(args.input)
        observed = float(np.cumsum(x)[-1]) if len(x) else 0.0
    argv += ["--seed", str(seed)]
    p, ens = tangent_test_pvalue(observed, steps, args.replicates, np.random.default_rng(seed), ties=args.ties)
    sums = ens.sums
    body["tangent"] = {
        "input_kind": kind,
        "n_steps": len(steps),
        "observed_sum": observed,
        "n_replicates": args.replicates,
        "ties": args.ties,
        "p_value": p,
        "ensemble": {"mean": float(np.mean(sums)), "var": float(np.var(sums)),
                     "quantiles": {q: float(np.quantile(sums, float(q), method="inverted_cdf"))
                                   for q in ("0.05", "0.5", "0.75", "0.95")}},
    }
    _emit(_report("tangent", argv, seed, **body), args.out)
    return 0


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args) -> int:
    seed = _resolve_seed(args)
    scenario = SCENARIO_NAMES[args.scenario]
    cfg = TestConfig(args.v, args.alpha, Tail(args.tail))
    params = None
    argv = ["calibrate", args.scenario, "--runs", str(args.runs), "--v", repr(args.v), "--alpha", repr(args.alpha),
            "--tail", args.tail]
    if scenario in (Scenario.IBL_BLIND, Scenario.IBL_VISIBLE):
        wa = args.wa if args.wa is not None else (0.0 if scenario is Scenario.IBL_BLIND else 1.0)
        params = IblParams(n_trials=args.trials, w_a=wa)
        argv += ["--trials", str(args.trials), "--wa", repr(wa)]
    elif scenario is Scenario.GAMBLER_FAIR_ODDS:
        params = GamblerParams(args.gambler_alpha)
        argv += ["--gambler-alpha", repr(args.gambler_alpha)]
    spec = CalibrationSpec(scenario, args.runs, cfg, seed, params)
    argv += ["--seed", str(seed)]
    body = {"scenario": scenario, "scenario_params": spec.scenario_params}
    if args.compare_fixed_t is not None:
        argv += ["--compare-fixed-t", str(args.compare_fixed_t)]
        body["comparison"] = compare_stopping_rules(spec, args.compare_fixed_t)
    else:
        rep = run_calibration(spec)
        body["report"] = {k: getattr(rep, k) for k in (
            "n_runs", "master_seed", "test_config", "n_rejected", "rejection_rate", "rejection_ci95",
            "not_stopped_rate", "ks_distance", "mean_stop_index", "z_samples")}
        if args.runs_csv:
            argv += ["--runs-csv", args.runs_csv]
            _write_rows(args.runs_csv, ("run", "seed", "status", "stop_index", "z", "p_value"),
                        ((r.index, r.seed, r.status.value, r.stop_index, r.z, r.p_value) for r in rep.runs))
    _emit(_report("calibrate", argv, seed, **body), args.out)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqmart", description="Martingale Z-test toolkit.")
    ap.add_argument("--version", action="version", version=f"seqmart {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mztest", help="run the martingale Z-test on a trial CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--v-threshold", type=_positive_float, required=True)
    p.add_argument("--alpha", type=_unit_open, default=0.05)
    p.add_argument("--tail", choices=[t.value for t in Tail], default="upper")
    p.add_argument("--emit-trace", metavar="FILE")
    p.add_argument("--baseline", choices=["fisher"])
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_mztest)

    p = sub.add_parser("simulate", help="simulate a scenario and write CSV files")
    p.add_argument("scenario", choices=["ibl", "gambler", "fair-odds", "walk-sd", "walk-ph"])
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out", required=True, metavar="DIR")
    g = p.add_argument_group("ibl")
    g.add_argument("--trials", type=_positive_int, default=500)
    g.add_argument("--beta", type=float, default=0.65)
    g.add_argument("--w-rho", type=float, default=1.0)
    g.add_argument("--w-h", type=float, default=1.0)
    g.add_argument("--wa", type=float, default=0.0)
    g.add_argument("--p-stim", type=float, default=0.8)
    g.add_argument("--block-min", type=_positive_int, default=50)
    g.add_argument("--block-max", type=_positive_int, default=100)
    g.add_argument("--reward-coding", choices=["signed", "binary"], default="signed")
    g.add_argument("--report", action="store_true", help="also run the Z-test and the Fisher baseline")
    g = p.add_argument_group("gambler / fair-odds")
    g.add_argument("--alpha", type=_unit_open, default=None,
                   help="win probability (gambler: 0.5, fair-odds: 0.25); with ibl --report, the test level (0.05)")
    g.add_argument("--rounds", type=_positive_int, default=10)
    g = p.add_argument_group("walk-sd / walk-ph")
    g.add_argument("--steps", type=int, default=0)
    g.add_argument("--v-threshold", type=_positive_float, default=None)
    g.add_argument("--high-var", type=float, default=1.0)
    g.add_argument("--low-var", type=float, default=None)
    g.add_argument("--critical-z", type=float, default=1.645)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tangent", help="tangent-sequence randomization test")
    p.add_argument("--input", required=True)
    p.add_argument("--replicates", type=_positive_int, default=10000)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--v-threshold", type=_positive_float, default=None,
                   help="trial input only: use trials up to the Z-test stopping time")
    p.add_argument("--support", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LO", "HI"),
                   help="trial input only: two values taken by r (default -1 1)")
    p.add_argument("--ties", choices=["mid", "include"], default="mid")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_tangent)

    p = sub.add_parser("calibrate", help="Monte Carlo calibration over seeded runs")
    p.add_argument("scenario", choices=list(SCENARIO_NAMES))
    p.add_argument("--runs", type=_positive_int, default=2000)
    p.add_argument("--v", type=_positive_float, default=300.0)
    p.add_argument("--alpha", type=_unit_open, default=0.05)
    p.add_argument("--tail", choices=[t.value for t in Tail], default="upper")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--compare-fixed-t", type=_positive_int)
    p.add_argument("--trials", type=_positive_int, default=500)
    p.add_argument("--wa", type=float, default=None)
    p.add_argument("--gambler-alpha", type=_unit_open, default=0.5)
    p.add_argument("--runs-csv", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_calibrate)
    return ap


def _fill_defaults(args):
    if getattr(args, "command", None) == "simulate":
        if args.alpha is None:
            args.alpha = {"gambler": 0.5, "fair-odds": 0.25}.get(args.scenario, 0.05)
        if args.scenario == "ibl" and args.report and args.v_threshold is None:
            args.v_threshold = 300.0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _fill_defaults(args)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (CsvFormatError, InvalidObservationError, InvalidDistributionError, FileNotFoundError) as exc:
        print(f"seqmart: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"seqmart: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
