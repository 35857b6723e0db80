"""Tangent-sequence randomization.

A tangent sequence redraws every increment independently from its
conditional law given the *observed* history. Summing a tangent sequence
gives one draw from the null ensemble against which the observed sum is
ranked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Observations, _as_arrays
from .simulators import GamblerTrajectory

__all__ = [
    "InvalidDistributionError",
    "StepDistribution",
    "TangentEnsemble",
    "sample_tangent_sum",
    "sample_tangent_sums",
    "tangent_test_pvalue",
    "exact_tangent_distribution",
    "steps_from_trials",
    "gambler_tangent_steps",
]

PROB_TOL = 1e-12


class InvalidDistributionError(ValueError):
    def __init__(self, message: str, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class StepDistribution:
    """Finite conditional law of one increment: ``values[i]`` with probability ``probs[i]``."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        self.validate()

    def validate(self, step=None):
        if not self.values:
            raise InvalidDistributionError("empty support", step)
        if len(self.values) != len(self.probs):
            raise InvalidDistributionError("values and probs differ in length", step)
        if not all(math.isfinite(v) for v in self.values):
            raise InvalidDistributionError("non-finite support value", step)
        if not all(math.isfinite(p) and p >= 0 for p in self.probs):
            raise InvalidDistributionError("probabilities must be finite and >= 0", step)
        if abs(math.fsum(self.probs) - 1.0) > PROB_TOL:
            raise InvalidDistributionError(f"probabilities sum to {math.fsum(self.probs)!r}, not 1", step)

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (v - m) ** 2 for v, p in zip(self.values, self.probs))

    @classmethod
    def point(cls, value: float = 0.0) -> "StepDistribution":
        return cls((value,), (1.0,))


@dataclass(frozen=True)
class TangentEnsemble:
    sums: np.ndarray
    n_replicates: int
    observed_sum: float

    def quantile(self, q: float) -> float:
        """Empirical quantile ``inf{s : F_n(s) >= q}`` of the ensemble."""
        return float(np.quantile(self.sums, q, method="inverted_cdf"))


def _check_steps(steps: Sequence[StepDistribution]):
    for i, st in enumerate(steps):
        if not isinstance(st, StepDistribution):
            raise InvalidDistributionError(f"expected StepDistribution, got {type(st).__name__}", i + 1)
        st.validate(i + 1)


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _draw(step: StepDistribution, u: np.ndarray) -> np.ndarray:
    if len(step.values) == 1:
        return np.full(u.shape, step.values[0])
    cum = np.cumsum(step.probs)
    idx = np.searchsorted(cum[:-1], u, side="right")
    return np.asarray(step.values)[idx]


def sample_tangent_sums(steps: Sequence[StepDistribution], n_replicates: int, rng=None) -> np.ndarray:
    """``n_replicates`` independent tangent sums.

    For each step in order, one block of ``n_replicates`` uniforms is drawn and
    mapped through the step's inverse CDF.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    _check_steps(steps)
    rng = _rng(rng)
    total = np.zeros(n_replicates)
    for st in steps:
        total += _draw(st, rng.random(n_replicates))
    return total


def sample_tangent_sum(steps: Sequence[StepDistribution], rng=None) -> float:
    """One tangent sum; same stream usage as ``sample_tangent_sums(steps, 1, rng)``."""
    return float(sample_tangent_sums(steps, 1, rng)[0])


def _tie_tolerance(steps: Sequence[StepDistribution], observed_sum: float) -> float:
    # sums of the same atoms accumulated in different orders differ by rounding only
    scale = math.fsum(max(abs(v) for v in st.values) for st in steps)
    return 1e-9 * max(abs(observed_sum), scale)


def tangent_test_pvalue(observed_sum: float, steps: Sequence[StepDistribution], n_replicates: int,
                        rng=None, ties: str = "mid"):
    """Upper-tail randomization p-value against ``n_replicates`` tangent sums.

    With ``ties="include"`` the estimate is ``(1 + #{S' >= S}) / (n + 1)``;
    with ``ties="mid"`` (default) replicates equal to the observed sum count
    one half, ``(1 + #{S' > S} + #{S' == S}/2) / (n + 1)``. Equality is judged
    to a relative 1e-9, since lattice-valued sums are only equal up to
    rounding. Mid-ties matter when the tangent sum is lattice-valued: the
    inclusive count then sits above the Gaussian tail by about half an atom.

    Returns ``(p, ensemble)``. For a lower-tail test, negate the observed sum
    and every support value.
    """
    if ties not in ("mid", "include"):
        raise ValueError("ties must be 'mid' or 'include'")
    sums = sample_tangent_sums(steps, n_replicates, rng)
    tol = _tie_tolerance(steps, observed_sum)
    above = int(np.count_nonzero(sums > observed_sum + tol))
    equal = int(np.count_nonzero(np.abs(sums - observed_sum) <= tol))
    count = above + (equal if ties == "include" else 0.5 * equal)
    p = min(1.0, (1 + count) / (n_replicates + 1))
    return p, TangentEnsemble(sums, n_replicates, float(observed_sum))


def exact_tangent_distribution(steps: Sequence[StepDistribution], max_atoms: int = 1 << 22):
    """Exact law of the tangent sum by repeated convolution.

    Returns ``(atoms, probs)`` with sorted atoms. Sums equal up to a relative
    1e-9 (different addition orders of the same values) are merged. Raises
    ValueError if the support would exceed ``max_atoms``.
    """
    _check_steps(steps)
    atoms = np.zeros(1)
    probs = np.ones(1)
    for st in steps:
        vals = np.asarray(st.values)
        pr = np.asarray(st.probs)
        keep = pr > 0
        vals, pr = vals[keep], pr[keep]
        if len(atoms) * len(vals) > max_atoms:
            raise ValueError(f"exact distribution would exceed {max_atoms} atoms")
        new_atoms = (atoms[:, None] + vals[None, :]).ravel()
        new_probs = (probs[:, None] * pr[None, :]).ravel()
        atoms, probs = _merge_atoms(new_atoms, new_probs)
    return atoms, probs


def _merge_atoms(atoms: np.ndarray, probs: np.ndarray, rel_tol: float = 1e-9):
    order = np.argsort(atoms, kind="stable")
    atoms, probs = atoms[order], probs[order]
    if len(atoms) == 0:
        return atoms, probs
    scale = float(np.max(np.abs(atoms)))
    new_group = np.concatenate(([True], np.diff(atoms) > rel_tol * scale))
    group = np.cumsum(new_group) - 1
    merged_p = np.bincount(group, weights=probs)
    return atoms[new_group], merged_p


def steps_from_trials(observations: Observations, support=(-1.0, 1.0)) -> list[StepDistribution]:
    """Tangent laws for ``X_t = b_t (R_t - r_mean_t)`` with two-valued ``R_t``.

    ``b_t`` and ``r_mean_t`` are held at their observed values and ``R_t`` is
    redrawn from the two-point law on ``support`` with mean ``r_mean_t``.
    """
    lo, hi = float(support[0]), float(support[1])
    if not hi > lo:
        raise ValueError("support must be (low, high) with high > low")
    arr = _as_arrays(observations)
    steps = []
    for i in range(len(arr)):
        b, m = float(arr.b[i]), float(arr.r_mean[i])
        if not (math.isfinite(b) and math.isfinite(m)):
            raise InvalidDistributionError("non-finite trial", i + 1)
        if not lo <= m <= hi:
            raise InvalidDistributionError(f"r_mean {m} outside support [{lo}, {hi}]", i + 1)
        p_hi = (m - lo) / (hi - lo)
        steps.append(StepDistribution((b * (hi - m), b * (lo - m)), (p_hi, 1.0 - p_hi)))
    return steps


def gambler_tangent_steps(traj: GamblerTrajectory, alpha: float) -> list[StepDistribution]:
    """Per-round laws of a fair-odds doubling gambler over the rounds actually played."""
    n = traj.stopped_at if traj.stopped_at is not None else len(traj)
    payoff = 1.0 / alpha - 1.0
    return [
        StepDistribution((float(s) * payoff, -float(s)), (alpha, 1.0 - alpha))
        for s in traj.stakes[:n]
    ]
