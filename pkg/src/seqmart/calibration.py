"""Monte Carlo calibration of the martingale Z-test.

Each run ``i`` of a calibration gets its own generator seeded by
:func:`derive_seed` ``(master_seed, i)``, so a report depends only on its
:class:`CalibrationSpec` and never on execution order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import special, stats

from .core import MartingaleTrace, Status, Tail, TestConfig, TestOutcome, decide, normal_cdf, run_sequential_test, z_to_p
from .simulators import (
    IblParams,
    WalkParams,
    WalkVariant,
    gambler_trace,
    session_to_trials,
    simulate_fair_odds_gambler,
    simulate_ibl_session,
    simulate_walk,
)

__all__ = [
    "Scenario",
    "GamblerParams",
    "CalibrationSpec",
    "RunRecord",
    "CalibrationReport",
    "RuleSummary",
    "StoppingComparison",
    "derive_seed",
    "ks_distance",
    "clopper_pearson",
    "binomial_range",
    "run_calibration",
    "compare_stopping_rules",
]


class Scenario(str, enum.Enum):
    IBL_BLIND = "ibl_blind"
    IBL_VISIBLE = "ibl_visible"
    WALK_STATE_DEPENDENT = "walk_state_dependent"
    WALK_SELF_PHACKING = "walk_self_phacking"
    GAMBLER_FAIR_ODDS = "gambler_fair_odds"


@dataclass(frozen=True)
class GamblerParams:
    alpha: float = 0.5


ScenarioParams = Union[IblParams, WalkParams, GamblerParams]


def default_params(scenario: Scenario) -> ScenarioParams:
    scenario = Scenario(scenario)
    if scenario is Scenario.IBL_BLIND:
        return IblParams(w_a=0.0)
    if scenario is Scenario.IBL_VISIBLE:
        return IblParams(w_a=1.0)
    if scenario is Scenario.WALK_STATE_DEPENDENT:
        return WalkParams(WalkVariant.STATE_DEPENDENT, v_threshold=1.0)
    if scenario is Scenario.WALK_SELF_PHACKING:
        return WalkParams(WalkVariant.SELF_PHACKING, v_threshold=1.0)
    return GamblerParams()


@dataclass(frozen=True)
class CalibrationSpec:
    """What to simulate and how to test it.

    ``scenario_params`` defaults to the scenario's standard parameters. For
    IBL scenarios its ``seed`` is ignored; for walks the ``v_threshold`` is
    replaced by the test config's.
    """

    scenario: Scenario
    n_runs: int
    test_config: TestConfig
    master_seed: int = 0
    scenario_params: Optional[ScenarioParams] = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        if self.scenario_params is None:
            object.__setattr__(self, "scenario_params", default_params(self.scenario))


@dataclass(frozen=True)
class RunRecord:
    index: int
    seed: int
    status: Status
    stop_index: Optional[int]
    z: float
    p_value: float


@dataclass(frozen=True)
class CalibrationReport:
    scenario: Scenario
    n_runs: int
    master_seed: int
    test_config: TestConfig
    n_rejected: int
    rejection_rate: float
    rejection_ci95: tuple
    not_stopped_rate: float
    z_samples: np.ndarray = field(repr=False)
    ks_distance: Optional[float]
    mean_stop_index: Optional[float]
    runs: tuple = field(default=(), repr=False)


def derive_seed(master_seed: int, run_index: int) -> int:
    """64-bit seed for one run: first word of ``SeedSequence([master_seed, run_index])``."""
    ss = np.random.SeedSequence([int(master_seed), int(run_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def ks_distance(samples) -> float:
    """Kolmogorov-Smirnov sup distance between the sample's ECDF and the standard normal CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 2:
        raise ValueError("ks_distance needs at least 2 samples")
    cdf = np.array([normal_cdf(v) for v in x])
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact (Clopper-Pearson) interval for a binomial proportion."""
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def binomial_range(p0: float, n: int, level: float = 0.99) -> tuple[float, float]:
    """Central ``level`` range of the observed rate k/n when k ~ Binomial(n, p0)."""
    a = 1.0 - level
    lo = float(stats.binom.ppf(a / 2, n, p0))
    hi = float(stats.binom.isf(a / 2, n, p0))
    return lo / n, hi / n


def _simulate_trace(spec: CalibrationSpec, seed: int, n_steps: int = 0) -> MartingaleTrace:
    params = spec.scenario_params
    if isinstance(params, WalkParams):
        wp = replace(params, n_steps=max(params.n_steps, n_steps), v_threshold=spec.test_config.v_threshold, seed=None)
        return simulate_walk(wp, np.random.default_rng(seed))
    if isinstance(params, GamblerParams):
        traj = simulate_fair_odds_gambler(params.alpha, np.random.default_rng(seed))
        return gambler_trace(traj, params.alpha)
    raise TypeError(f"no trace simulator for {type(params).__name__}")


def _run_once(spec: CalibrationSpec, seed: int) -> TestOutcome:
    params = spec.scenario_params
    if isinstance(params, IblParams):
        p = replace(params, seed=seed)
        return run_sequential_test(session_to_trials(simulate_ibl_session(p), p), spec.test_config)
    return decide(_simulate_trace(spec, seed), spec.test_config)


def run_calibration(spec: CalibrationSpec) -> CalibrationReport:
    records = []
    for i in range(spec.n_runs):
        seed = derive_seed(spec.master_seed, i)
        try:
            out = _run_once(spec, seed)
        except Exception as exc:
            raise RuntimeError(f"calibration run {i} (seed {seed}) failed: {exc}") from exc
        records.append(RunRecord(i, seed, out.status, out.stop_index, out.z, out.p_value))

    n = spec.n_runs
    k = sum(r.status is Status.REJECTED for r in records)
    stopped = [r for r in records if r.stop_index is not None]
    z = np.array([r.z for r in stopped])
    return CalibrationReport(
        scenario=spec.scenario,
        n_runs=n,
        master_seed=spec.master_seed,
        test_config=spec.test_config,
        n_rejected=k,
        rejection_rate=k / n,
        rejection_ci95=clopper_pearson(k, n, 0.95),
        not_stopped_rate=(n - len(stopped)) / n,
        z_samples=z,
        ks_distance=ks_distance(z) if len(z) >= 2 else None,
        mean_stop_index=float(np.mean([r.stop_index for r in stopped])) if stopped else None,
        runs=tuple(records),
    )


@dataclass(frozen=True)
class RuleSummary:
    """Sign frequencies of S and rejection rate under one stopping rule.

    Sign fractions are over runs where the rule produced a stopping time;
    the rejection rate is over all runs.
    """

    n_evaluated: int
    positive_fraction: float
    negative_fraction: float
    rejection_rate: float


@dataclass(frozen=True)
class StoppingComparison:
    scenario: Scenario
    n_runs: int
    master_seed: int
    test_config: TestConfig
    fixed_t: int
    fixed_horizon: RuleSummary
    fixed_variance: RuleSummary
    ever_significant_rate: float
    fixed_variance_not_stopped_rate: float


def _summary(s_values, rejected, n_runs) -> RuleSummary:
    s = np.asarray(s_values, dtype=float)
    m = len(s)
    return RuleSummary(
        n_evaluated=m,
        positive_fraction=float(np.mean(s > 0)) if m else math.nan,
        negative_fraction=float(np.mean(s < 0)) if m else math.nan,
        rejection_rate=int(np.sum(rejected)) / n_runs,
    )


def _significant(z: np.ndarray, config: TestConfig) -> np.ndarray:
    """Vectorised ``z_to_p(z, tail) <= alpha``; undefined Z (V=0) is never significant."""
    z = np.where(np.isnan(z), 0.0, z)
    if config.tail is Tail.UPPER:
        p = 0.5 * special.erfc(z / math.sqrt(2.0))
    elif config.tail is Tail.LOWER:
        p = 0.5 * special.erfc(-z / math.sqrt(2.0))
    else:
        p = np.minimum(1.0, special.erfc(np.abs(z) / math.sqrt(2.0)))
    return p <= config.alpha


def compare_stopping_rules(spec: CalibrationSpec, fixed_T: int) -> StoppingComparison:
    """Per run, test at a fixed horizon ``fixed_T`` and at the first ``V_t >= V`` on the same path.

    Also reports how often the running Z is significant at *some* t <= fixed_T,
    i.e. the rejection rate of a post-hoc "stop when significant" analyst.
    """
    if fixed_T < 1:
        raise ValueError("fixed_T must be >= 1")
    if isinstance(spec.scenario_params, GamblerParams):
        raise ValueError("the gambler scenario has no fixed-horizon analysis; it stops at its first win")
    cfg = spec.test_config
    t_s, t_rej, v_s, v_rej, ever = [], [], [], [], []
    not_stopped = 0
    for i in range(spec.n_runs):
        seed = derive_seed(spec.master_seed, i)
        if isinstance(spec.scenario_params, IblParams):
            p = replace(spec.scenario_params, seed=seed, n_trials=max(spec.scenario_params.n_trials, fixed_T))
            trials = session_to_trials(simulate_ibl_session(p), p)
            out_v = run_sequential_test(trials, cfg)
            x = trials.b * (trials.r - trials.r_mean)
            trace = MartingaleTrace.from_increments(x, trials.b ** 2 * trials.r_var)
        else:
            trace = _simulate_trace(spec, seed, n_steps=fixed_T)
            out_v = decide(trace, cfg)
        head = trace.z_path()[:fixed_T]
        z_t = 0.0 if math.isnan(head[-1]) else float(head[-1])
        t_s.append(trace.s[fixed_T - 1])
        t_rej.append(z_to_p(z_t, cfg.tail) <= cfg.alpha)
        ever.append(bool(np.any(_significant(head, cfg))))
        if out_v.stopped:
            v_s.append(out_v.s_at_stop)
        else:
            not_stopped += 1
        v_rej.append(out_v.rejected)
    n = spec.n_runs
    return StoppingComparison(
        scenario=spec.scenario,
        n_runs=n,
        master_seed=spec.master_seed,
        test_config=cfg,
        fixed_t=fixed_T,
        fixed_horizon=_summary(t_s, t_rej, n),
        fixed_variance=_summary(v_s, v_rej, n),
        ever_significant_rate=float(np.mean(ever)),
        fixed_variance_not_stopped_rate=not_stopped / n,
    )
