"""Seeded simulators for the block-switching task and the didactic martingales.

All randomness comes from ``numpy.random.Generator`` (PCG64). Every simulator
draws its uniforms/normals in a fixed order, so equal seeds give bit-identical
output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import MartingaleTrace, TrialArrays

__all__ = [
    "IblParams",
    "IblSession",
    "GamblerTrajectory",
    "WalkVariant",
    "WalkParams",
    "MAX_GAMBLER_ROUNDS",
    "logistic",
    "subject_choice_prob",
    "stimulus_conditional_moments",
    "simulate_ibl_session",
    "session_to_trials",
    "gambler_from_outcomes",
    "simulate_double_or_quits",
    "simulate_fair_odds_gambler",
    "gambler_trace",
    "simulate_walk",
]

#: 2**63 is the first stake that no longer fits a signed 64-bit integer
MAX_GAMBLER_ROUNDS = 63


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# block-switching behavioural task


@dataclass(frozen=True)
class IblParams:
    """Task and subject parameters; defaults are the stimulus-blind subject.

    ``reward_coding`` sets the feedback value entering the reward-learning
    update: ``"signed"`` uses +1/-1 (so choice*feedback equals the stimulus
    and ``rho`` tracks recent stimulus sides), ``"binary"`` uses 1/0.
    The stored ``IblSession.reward`` is the 1/0 indicator either way.
    """

    n_trials: int = 500
    beta: float = 0.65
    w_rho: float = 1.0
    w_h: float = 1.0
    w_a: float = 0.0
    p_stim_match: float = 0.8
    block_len_min: int = 50
    block_len_max: int = 100
    seed: int = 0
    reward_coding: str = "signed"

    def __post_init__(self):
        if self.reward_coding not in ("signed", "binary"):
            raise ValueError("reward_coding must be 'signed' or 'binary'")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not 0 <= self.p_stim_match <= 1:
            raise ValueError("p_stim_match must lie in [0, 1]")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if not 1 <= self.block_len_min <= self.block_len_max:
            raise ValueError("need 1 <= block_len_min <= block_len_max")
        for name in ("beta", "w_rho", "w_h", "w_a"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class IblSession:
    """One simulated session.

    ``rho[t]`` and ``habit[t]`` are the learning variables in force when the
    choice on trial ``t`` is made (before that trial's update).
    """

    block: np.ndarray
    stimulus: np.ndarray
    choice: np.ndarray
    reward: np.ndarray
    rho: np.ndarray
    habit: np.ndarray

    def __len__(self):
        return len(self.block)

    @property
    def reward_rate(self) -> float:
        return float(self.reward.mean())


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def subject_choice_prob(rho: float, h: float, stimulus: int, params: IblParams) -> float:
    """P(choice = +1) from the log-odds ``w_rho*rho + w_h*h + w_a*stimulus``."""
    return logistic(params.w_rho * rho + params.w_h * h + params.w_a * stimulus)


def stimulus_conditional_moments(block: int, p_stim_match: float) -> tuple[float, float]:
    """Mean and variance of the +/-1 stimulus given the current block.

    Probabilities are taken at their shortest decimal value, so p=0.8 gives
    exactly (0.6, 0.64) rather than 0.6000000000000001.
    """
    if block not in (1, -1):
        raise ValueError(f"block must be +1 or -1, got {block!r}")
    if not 0 <= p_stim_match <= 1:
        raise ValueError("p_stim_match must lie in [0, 1]")
    m = Fraction(repr(float(p_stim_match))) * 2 - 1
    return float(block * m), float(1 - m * m)


def _block_sequence(n: int, lo: int, hi: int, rng: np.random.Generator) -> np.ndarray:
    sign = 1 if rng.integers(2) else -1
    block = np.empty(n, dtype=np.int8)
    t = 0
    while t < n:
        run = int(rng.integers(lo, hi + 1))
        block[t:t + run] = sign
        t += run
        sign = -sign
    return block


def simulate_ibl_session(params: IblParams) -> IblSession:
    """Simulate the block task with a reward/habit-learning subject.

    Draw order (fixed, for reproducibility): first block sign, block run
    lengths, then ``n_trials`` stimulus uniforms, then ``n_trials`` choice
    uniforms.
    """
    rng = np.random.default_rng(params.seed)
    n = params.n_trials
    block = _block_sequence(n, params.block_len_min, params.block_len_max, rng)
    u_stim = rng.random(n)
    u_choice = rng.random(n)

    stimulus = np.where(u_stim < params.p_stim_match, block, -block).astype(np.int8)
    choice = np.empty(n, dtype=np.int8)
    reward = np.empty(n, dtype=np.int8)
    rho = np.empty(n)
    habit = np.empty(n)

    beta, w_rho, w_h, w_a = params.beta, params.w_rho, params.w_h, params.w_a
    miss = -1 if params.reward_coding == "signed" else 0
    r_t = h_t = 0.0
    stim_list = stimulus.tolist()
    uc = u_choice.tolist()
    for t in range(n):
        rho[t] = r_t
        habit[t] = h_t
        a = stim_list[t]
        c = 1 if uc[t] < logistic(w_rho * r_t + w_h * h_t + w_a * a) else -1
        rew = 1 if c == a else 0
        choice[t] = c
        reward[t] = rew
        r_t = beta * r_t + c * (rew if rew else miss)
        h_t = beta * h_t + c
    return IblSession(block, stimulus, choice, reward, rho, habit)


def session_to_trials(session: IblSession, params: IblParams) -> TrialArrays:
    """Trials for the Z-test: ``b`` is the choice, ``r`` the stimulus.

    The experimenter generates the block, so its value is part of the
    history and fixes the stimulus' conditional mean and variance.
    """
    (m_pos, v_pos) = stimulus_conditional_moments(1, params.p_stim_match)
    (m_neg, v_neg) = stimulus_conditional_moments(-1, params.p_stim_match)
    pos = session.block > 0
    return TrialArrays(
        b=session.choice.astype(float),
        r=session.stimulus.astype(float),
        r_mean=np.where(pos, m_pos, m_neg),
        r_var=np.where(pos, v_pos, v_neg),
    )


# ---------------------------------------------------------------------------
# gamblers


@dataclass(frozen=True)
class GamblerTrajectory:
    """Per-round stake, outcome, profit and running profit.

    ``stopped_at`` is the 1-based round of the first win. ``capped`` marks a
    run that lost MAX_GAMBLER_ROUNDS times in a row and stopped betting.
    """

    stakes: np.ndarray
    outcomes: np.ndarray  # True for a win
    profits: np.ndarray
    cumulative: np.ndarray
    stopped_at: Optional[int]
    capped: bool = False

    def __len__(self):
        return len(self.stakes)


def gambler_from_outcomes(wins: Sequence[bool], win_payoff: float = 1.0) -> GamblerTrajectory:
    """Doubling strategy replayed on given outcomes.

    ``win_payoff`` is the profit per unit stake on a win (1 for an even-money
    coin, ``1/alpha - 1`` for fair odds at win probability ``alpha``).
    """
    wins = np.asarray(wins, dtype=bool)
    n = len(wins)
    stakes = np.zeros(n)
    profits = np.zeros(n)
    stopped_at = None
    capped = False
    stake = 1.0
    for t in range(n):
        if stopped_at is not None:
            continue
        if t >= MAX_GAMBLER_ROUNDS:
            capped = True
            break
        stakes[t] = stake
        if wins[t]:
            profits[t] = stake * win_payoff
            stopped_at = t + 1
        else:
            profits[t] = -stake
            stake *= 2.0
    return GamblerTrajectory(stakes, wins, profits, np.cumsum(profits), stopped_at, capped)


def simulate_double_or_quits(n_rounds: int, rng=None) -> GamblerTrajectory:
    """Fair-coin double-or-quits over a fixed number of rounds.

    Coins are tossed on every round; after the first win the stake is 0.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    wins = _rng(rng).random(n_rounds) < 0.5
    return gambler_from_outcomes(wins, 1.0)


def simulate_fair_odds_gambler(alpha: float, rng=None) -> GamblerTrajectory:
    """Double-or-quits at win probability ``alpha`` and fair odds, played until the first win."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    rng = _rng(rng)
    wins = []
    while len(wins) < MAX_GAMBLER_ROUNDS:
        w = bool(rng.random() < alpha)
        wins.append(w)
        if w:
            break
    traj = gambler_from_outcomes(wins, 1.0 / alpha - 1.0)
    if traj.stopped_at is None:
        traj = GamblerTrajectory(traj.stakes, traj.outcomes, traj.profits, traj.cumulative, None, True)
    return traj


def gambler_trace(traj: GamblerTrajectory, alpha: float = 0.5) -> MartingaleTrace:
    """Martingale trace of a gambler; step variance is ``stake**2 * (1 - alpha) / alpha``."""
    return MartingaleTrace.from_increments(traj.profits, traj.stakes ** 2 * ((1.0 - alpha) / alpha))


# ---------------------------------------------------------------------------
# counterexample walks


class WalkVariant(str, enum.Enum):
    STATE_DEPENDENT = "state_dependent_variance"
    SELF_PHACKING = "self_phacking"


@dataclass(frozen=True)
class WalkParams:
    """Gaussian martingale whose step variance depends on its own state.

    ``state_dependent_variance``: variance ``high_var`` while S_{t-1} > 0,
    else ``low_var``.
    ``self_phacking``: variance ``high_var`` until S_{t-1}/sqrt(V_{t-1})
    exceeds ``critical_z``, then ``low_var`` (0 by default, i.e. frozen).

    ``n_steps`` steps are simulated one by one. If ``v_threshold`` is also
    given and not yet reached, the walk continues until V_t >= v_threshold.
    """

    variant: WalkVariant = WalkVariant.STATE_DEPENDENT
    high_var: float = 1.0
    low_var: Optional[float] = None
    critical_z: float = 1.645
    n_steps: int = 0
    v_threshold: Optional[float] = None
    max_steps: int = 10_000_000
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", WalkVariant(self.variant))
        if self.low_var is None:
            object.__setattr__(self, "low_var", 1e-12 if self.variant is WalkVariant.STATE_DEPENDENT else 0.0)
        if self.high_var < 0 or self.low_var < 0:
            raise ValueError("variances must be >= 0")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.n_steps == 0 and self.v_threshold is None:
            raise ValueError("give n_steps, v_threshold, or both")
        if self.v_threshold is not None and not self.v_threshold > 0:
            raise ValueError("v_threshold must be > 0")
        if self.variant is WalkVariant.STATE_DEPENDENT and self.v_threshold is not None and self.low_var == 0:
            raise ValueError("state-dependent walk with low_var=0 can never reach v_threshold once negative")


class _TraceBuilder:
    def __init__(self):
        self.x: list[np.ndarray] = []
        self.var: list[np.ndarray] = []
        self.s = 0.0
        self.v = 0.0
        self.n = 0

    def extend(self, x: np.ndarray, var: np.ndarray, s_path: np.ndarray, v_path: np.ndarray):
        if len(x) == 0:
            return
        self.x.append(x)
        self.var.append(var)
        self.s = float(s_path[-1])
        self.v = float(v_path[-1])
        self.n += len(x)

    def add(self, x: float, var: float):
        self.extend(np.array([x]), np.array([var]), np.array([self.s + x]), np.array([self.v + var]))

    def trace(self) -> MartingaleTrace:
        if not self.x:
            return MartingaleTrace(np.zeros(0), np.zeros(0), np.zeros(0))
        return MartingaleTrace.from_increments(np.concatenate(self.x), np.concatenate(self.var))


def _running(start: float, inc: np.ndarray) -> np.ndarray:
    # same left-to-right additions as a scalar loop ``s = s + inc[i]``
    return np.cumsum(np.concatenate(([start], inc)))[1:]


def _sd_walk_steps(b: _TraceBuilder, z: np.ndarray, p: WalkParams, stop_v: Optional[float]) -> int:
    """Advance the state-dependent walk over normals ``z``; return how many were used."""
    sd_hi, sd_lo = math.sqrt(p.high_var), math.sqrt(p.low_var)
    i, n = 0, len(z)
    chunk = 64
    while i < n:
        high = b.s > 0
        sd, var = (sd_hi, p.high_var) if high else (sd_lo, p.low_var)
        j_end = min(n, i + chunk)
        inc = sd * z[i:j_end]
        s_path = _running(b.s, inc)
        v_path = _running(b.v, np.full(len(inc), var))
        switch = (s_path <= 0) if high else (s_path > 0)
        if stop_v is not None:
            switch = switch | (v_path >= stop_v)
        hit = np.flatnonzero(switch)
        k = int(hit[0]) + 1 if hit.size else len(inc)
        b.extend(inc[:k], np.full(k, var), s_path[:k], v_path[:k])
        i += k
        if stop_v is not None and b.v >= stop_v:
            break
        chunk = 64 if hit.size else min(chunk * 2, 1 << 16)
    return i


def _killed_bm_endpoint(s: float, r: float, rng: np.random.Generator) -> float:
    """Endpoint at time r of Brownian motion from s < 0, conditioned not to reach 0."""
    sd = math.sqrt(r)
    while True:
        y = s + sd * rng.standard_normal()
        if y >= 0:
            continue
        if rng.random() < -math.expm1(-2.0 * s * y / r):
            return y


def _sd_walk_to_threshold(b: _TraceBuilder, p: WalkParams, rng: np.random.Generator):
    """Continue the state-dependent walk until V >= v_threshold.

    Unit-variance stretches are simulated step by step. A low-variance stretch
    below zero would need ~S**2/low_var steps to climb back, so it is replaced
    by one aggregated entry: its duration on the variance clock is the
    Brownian first-passage time S**2/N**2, truncated at the threshold.
    """
    thr = p.v_threshold
    steps = b.n
    while b.v < thr:
        if steps >= p.max_steps:
            break
        if b.s > 0:
            need = max(1, math.ceil((thr - b.v) / p.high_var))
            z = rng.standard_normal(min(need, 4096))
            steps += _sd_walk_steps(b, z, p, thr)
            continue
        remaining = thr - b.v
        g = rng.standard_normal()
        tau = (b.s * b.s) / (g * g) if g != 0 else math.inf
        if tau < remaining:
            # lands just above zero, by about one low-variance step
            s_new = math.sqrt(p.low_var) * abs(rng.standard_normal())
            var = max(tau, p.low_var)
            b.add(s_new - b.s, var)
        else:
            y = _killed_bm_endpoint(b.s, remaining, rng)
            var = remaining
            while b.v + var < thr:
                var = np.nextafter(var, math.inf)
            b.add(y - b.s, var)
        steps += 1


def _ph_walk_steps(b: _TraceBuilder, z: np.ndarray, p: WalkParams, stop_v: Optional[float]) -> int:
    sd_hi, sd_lo = math.sqrt(p.high_var), math.sqrt(p.low_var)
    i, n = 0, len(z)
    chunk = 256
    while i < n:
        frozen = b.v > 0 and b.s / math.sqrt(b.v) > p.critical_z
        if frozen and p.low_var == 0:
            inc = np.zeros(n - i)
            b.extend(inc, inc.copy(), np.full(n - i, b.s), np.full(n - i, b.v))
            return n
        sd, var = (sd_lo, p.low_var) if frozen else (sd_hi, p.high_var)
        j_end = min(n, i + chunk)
        inc = sd * z[i:j_end]
        s_path = _running(b.s, inc)
        v_path = _running(b.v, np.full(len(inc), var))
        with np.errstate(divide="ignore", invalid="ignore"):
            zz = np.where(v_path > 0, s_path / np.sqrt(v_path), 0.0)
        switch = (zz <= p.critical_z) if frozen else (zz > p.critical_z)
        if stop_v is not None:
            switch = switch | (v_path >= stop_v)
        hit = np.flatnonzero(switch)
        k = int(hit[0]) + 1 if hit.size else len(inc)
        b.extend(inc[:k], np.full(k, var), s_path[:k], v_path[:k])
        i += k
        if stop_v is not None and b.v >= stop_v:
            break
        chunk = 256 if hit.size else min(chunk * 2, 1 << 16)
    return i


def _ph_walk_to_threshold(b: _TraceBuilder, p: WalkParams, rng: np.random.Generator):
    thr = p.v_threshold
    while b.v < thr and b.n < p.max_steps:
        if b.v > 0 and b.s / math.sqrt(b.v) > p.critical_z and p.low_var == 0:
            break  # frozen for good: V never grows again
        var = p.high_var if p.high_var > 0 else p.low_var
        if var == 0:
            break
        need = max(1, math.ceil((thr - b.v) / var))
        z = rng.standard_normal(min(need, 4096, p.max_steps - b.n))
        _ph_walk_steps(b, z, p, thr)


def simulate_walk(params: WalkParams, rng=None) -> MartingaleTrace:
    """Simulate one of the two counterexample walks, starting from S_0 = V_0 = 0.

    The first ``n_steps`` entries of the trace are single steps driven by
    ``n_steps`` standard normals drawn up front. Entries added afterwards to
    reach ``v_threshold`` may aggregate a long low-variance stretch into one
    entry (see :func:`_sd_walk_to_threshold`), so past ``n_steps`` an entry
    index is a position on the variance clock rather than a step count.
    """
    rng = _rng(params.seed if rng is None else rng)
    b = _TraceBuilder()
    z = rng.standard_normal(params.n_steps)
    if params.variant is WalkVariant.STATE_DEPENDENT:
        _sd_walk_steps(b, z, params, None)
        if params.v_threshold is not None:
            _sd_walk_to_threshold(b, params, rng)
    else:
        _ph_walk_steps(b, z, params, None)
        if params.v_threshold is not None:
            _ph_walk_to_threshold(b, params, rng)
    return b.trace()
