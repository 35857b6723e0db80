"""Martingale Z-test: increments, cumulative conditional variance, stopping and decision.

The test statistic is built from a measured series ``b`` and a randomized
series ``r`` whose history-conditional mean and variance are known::

    X_t = b_t * (r_t - r_mean_t)        S_t = X_1 + ... + X_t
    V_t = sum_u b_u**2 * r_var_u        Z   = S_T / sqrt(V_T)

where ``T`` is the first trial at which ``V_t`` reaches a threshold chosen
before looking at the data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "InvalidObservationError",
    "TrialObservation",
    "TrialArrays",
    "MartingaleTrace",
    "Tail",
    "Status",
    "DiagnosticWarning",
    "TestConfig",
    "DiagnosticsReport",
    "TestOutcome",
    "md_increment",
    "variance_increment",
    "build_trace",
    "normal_cdf",
    "normal_sf",
    "z_to_p",
    "diagnose",
    "decide",
    "run_sequential_test",
    "MIN_CONTRIBUTIONS",
    "DOMINANT_FRACTION",
]

#: rule-of-thumb number of comparable contributions before the Gaussian
#: approximation is trusted
MIN_CONTRIBUTIONS = 30.0
#: a single increment larger than this fraction of sqrt(V_T) is flagged
DOMINANT_FRACTION = 0.1


class InvalidObservationError(ValueError):
    """Raised for a non-finite or otherwise unusable trial.

    ``trial`` is the 1-based trial index (matches the ``t`` column of trial CSVs),
    or None when the problem is not tied to one trial.
    """

    def __init__(self, message: str, trial: Optional[int] = None):
        self.trial = trial
        if trial is not None:
            message = f"trial {trial}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TrialObservation:
    b: float
    r: float
    r_mean: float
    r_var: float

    def __post_init__(self):
        _check_fields(self.b, self.r, self.r_mean, self.r_var)


def _check_fields(b, r, r_mean, r_var, trial=None):
    for name, val in (("b", b), ("r", r), ("r_mean", r_mean), ("r_var", r_var)):
        if not math.isfinite(val):
            raise InvalidObservationError(f"{name} is not finite ({val!r})", trial)
    if r_var < 0:
        raise InvalidObservationError(f"r_var is negative ({r_var!r})", trial)


@dataclass(frozen=True)
class TrialArrays:
    """Column-oriented batch of trials; same content as a list of TrialObservation.

    Unlike TrialObservation, construction does not validate; validation happens
    in :func:`build_trace` / :func:`run_sequential_test` so that bad trials past
    the stopping time can be ignored.
    """

    b: np.ndarray
    r: np.ndarray
    r_mean: np.ndarray
    r_var: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(getattr(self, k), dtype=float) for k in ("b", "r", "r_mean", "r_var")]
        n = {c.shape for c in cols}
        if len(n) != 1 or cols[0].ndim != 1:
            raise ValueError("TrialArrays columns must be 1-D and of equal length")
        for k, c in zip(("b", "r", "r_mean", "r_var"), cols):
            object.__setattr__(self, k, c)

    def __len__(self):
        return len(self.b)

    def __getitem__(self, i) -> TrialObservation:
        return TrialObservation(float(self.b[i]), float(self.r[i]), float(self.r_mean[i]), float(self.r_var[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_observations(cls, observations: Iterable[TrialObservation]) -> "TrialArrays":
        obs = list(observations)
        return cls(
            np.array([o.b for o in obs], dtype=float),
            np.array([o.r for o in obs], dtype=float),
            np.array([o.r_mean for o in obs], dtype=float),
            np.array([o.r_var for o in obs], dtype=float),
        )


Observations = Union[TrialArrays, Sequence[TrialObservation]]


def _as_arrays(observations: Observations) -> TrialArrays:
    if isinstance(observations, TrialArrays):
        return observations
    return TrialArrays.from_observations(observations)


@dataclass(frozen=True)
class MartingaleTrace:
    """Aligned martingale differences ``x``, partial sums ``s`` and cumulative variance ``v``."""

    x: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for k in ("x", "s", "v"):
            object.__setattr__(self, k, np.asarray(getattr(self, k), dtype=float))
        if not (self.x.shape == self.s.shape == self.v.shape) or self.x.ndim != 1:
            raise ValueError("trace sequences must be 1-D and of equal length")

    def __len__(self):
        return len(self.x)

    @property
    def step_variance(self) -> np.ndarray:
        """Per-step conditional variances recovered from ``v``."""
        return np.diff(self.v, prepend=0.0)

    @classmethod
    def from_increments(cls, x, step_var) -> "MartingaleTrace":
        """Running sums of ``x`` and ``step_var`` in one left-to-right pass."""
        x = np.asarray(x, dtype=float)
        step_var = np.asarray(step_var, dtype=float)
        # np.cumsum accumulates sequentially, so s[t] == s[t-1] + x[t] bit for bit
        return cls(x, np.cumsum(x), np.cumsum(step_var))

    def z_path(self) -> np.ndarray:
        """Running ``S_t / sqrt(V_t)``; NaN where ``V_t == 0``."""
        z = np.full(len(self), np.nan)
        pos = self.v > 0
        z[pos] = self.s[pos] / np.sqrt(self.v[pos])
        return z


class Tail(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    TWO = "two"


class Status(str, enum.Enum):
    REJECTED = "rejected"
    NOT_REJECTED = "not_rejected"
    NOT_STOPPED = "not_stopped"


class DiagnosticWarning(str, enum.Enum):
    FEW_CONTRIBUTIONS = "few_contributions"
    DOMINANT_INCREMENT = "dominant_increment"
    THRESHOLD_NOT_REACHED = "threshold_not_reached"


@dataclass(frozen=True)
class TestConfig:
    """Pre-registered threshold on cumulative conditional variance, level and tail."""

    __test__ = False  # not a pytest class

    v_threshold: float
    alpha: float = 0.05
    tail: Tail = Tail.UPPER

    def __post_init__(self):
        if not (math.isfinite(self.v_threshold) and self.v_threshold > 0):
            raise ValueError(f"v_threshold must be finite and > 0, got {self.v_threshold!r}")
        if not (0 < self.alpha < 1):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "tail", Tail(self.tail))


@dataclass(frozen=True)
class DiagnosticsReport:
    max_abs_increment: float
    n_steps: int
    effective_contributions: float
    warnings: tuple = ()


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    status: Status
    stop_index: Optional[int]
    s_at_stop: float
    v_at_stop: float
    z: float
    p_value: float
    diagnostics: DiagnosticsReport = field(repr=False)

    @property
    def rejected(self) -> bool:
        return self.status is Status.REJECTED

    @property
    def stopped(self) -> bool:
        return self.stop_index is not None


def md_increment(obs: TrialObservation) -> float:
    """Martingale difference ``b * (r - r_mean)``."""
    _check_fields(obs.b, obs.r, obs.r_mean, obs.r_var)
    return obs.b * (obs.r - obs.r_mean)


def variance_increment(obs: TrialObservation) -> float:
    """Conditional variance of the increment, ``b**2 * r_var``."""
    _check_fields(obs.b, obs.r, obs.r_mean, obs.r_var)
    return obs.b * obs.b * obs.r_var


def _first_invalid(arr: TrialArrays) -> Optional[int]:
    bad = ~(np.isfinite(arr.b) & np.isfinite(arr.r) & np.isfinite(arr.r_mean) & np.isfinite(arr.r_var))
    bad |= arr.r_var < 0
    idx = np.flatnonzero(bad)
    return int(idx[0]) if idx.size else None


def _raise_invalid(arr: TrialArrays, i: int):
    _check_fields(float(arr.b[i]), float(arr.r[i]), float(arr.r_mean[i]), float(arr.r_var[i]), trial=i + 1)


def _increments(arr: TrialArrays):
    with np.errstate(invalid="ignore", over="ignore"):
        x = arr.b * (arr.r - arr.r_mean)
        step_var = arr.b * arr.b * arr.r_var
    return x, step_var


def build_trace(observations: Observations) -> MartingaleTrace:
    """Martingale trace over all observations; any invalid trial raises."""
    arr = _as_arrays(observations)
    bad = _first_invalid(arr)
    if bad is not None:
        _raise_invalid(arr, bad)
    return MartingaleTrace.from_increments(*_increments(arr))


def normal_sf(z: float) -> float:
    """Standard normal upper tail ``1 - Phi(z)``, accurate in the far tail."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def z_to_p(z: float, tail: Tail = Tail.UPPER) -> float:
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z!r}")
    tail = Tail(tail)
    if tail is Tail.UPPER:
        return normal_sf(z)
    if tail is Tail.LOWER:
        return normal_cdf(z)
    return min(1.0, 2.0 * normal_sf(abs(z)))


def diagnose(trace: MartingaleTrace, stop_index: Optional[int], config: Optional[TestConfig] = None) -> DiagnosticsReport:
    """Validity heuristics for the Gaussian approximation at the stopping time.

    Looks at the first ``stop_index`` steps, or the whole trace when the
    threshold was never reached. ``config`` is accepted for symmetry with
    :func:`run_sequential_test`; the heuristics do not depend on it.
    """
    n = len(trace) if stop_index is None else stop_index
    warnings = []
    if n == 0:
        max_abs, v_end, eff = 0.0, 0.0, 0.0
    else:
        max_abs = float(np.max(np.abs(trace.x[:n])))
        v_end = float(trace.v[n - 1])
        max_var = float(np.max(trace.step_variance[:n]))
        eff = v_end / max_var if max_var > 0 else 0.0
    if eff < MIN_CONTRIBUTIONS:
        warnings.append(DiagnosticWarning.FEW_CONTRIBUTIONS)
    if v_end > 0 and max_abs > DOMINANT_FRACTION * math.sqrt(v_end):
        warnings.append(DiagnosticWarning.DOMINANT_INCREMENT)
    if stop_index is None:
        warnings.append(DiagnosticWarning.THRESHOLD_NOT_REACHED)
    return DiagnosticsReport(max_abs, n, eff, tuple(warnings))


def _stop_index(v: np.ndarray, threshold: float) -> Optional[int]:
    hit = np.flatnonzero(v >= threshold)
    return int(hit[0]) + 1 if hit.size else None


def decide(trace: MartingaleTrace, config: TestConfig) -> TestOutcome:
    """Stop at the first ``V_t >= v_threshold`` and apply the Gaussian test there."""
    t_stop = _stop_index(trace.v, config.v_threshold)
    diag = diagnose(trace, t_stop, config)
    if t_stop is None:
        s_end = float(trace.s[-1]) if len(trace) else 0.0
        v_end = float(trace.v[-1]) if len(trace) else 0.0
        return TestOutcome(Status.NOT_STOPPED, None, s_end, v_end, 0.0, 1.0, diag)
    s_t = float(trace.s[t_stop - 1])
    v_t = float(trace.v[t_stop - 1])
    z = s_t / math.sqrt(v_t)
    p = z_to_p(z, config.tail)
    status = Status.REJECTED if p <= config.alpha else Status.NOT_REJECTED
    return TestOutcome(status, t_stop, s_t, v_t, z, p, diag)


def run_sequential_test(observations: Observations, config: TestConfig) -> TestOutcome:
    """Run the martingale Z-test on a sequence of trials.

    Trials after the stopping time never influence the outcome: they are
    neither validated nor included in any reported quantity.

    Raises
    ------
    InvalidObservationError
        If a trial at or before the stopping time is non-finite or has a
        negative ``r_var``. The error's ``trial`` attribute is 1-based.
    """
    arr = _as_arrays(observations)
    x, step_var = _increments(arr)
    v = np.cumsum(step_var)
    t_stop = _stop_index(v, config.v_threshold)
    bad = _first_invalid(arr)
    if bad is not None and (t_stop is None or bad < t_stop):
        _raise_invalid(arr, bad)
    n = len(arr) if t_stop is None else t_stop
    return decide(MartingaleTrace.from_increments(x[:n], step_var[:n]), config)
