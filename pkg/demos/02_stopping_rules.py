"""
Why the test stops on accumulated variance
==========================================

Two null martingales whose step variance depends on their own state.

* The state-dependent walk has variance 1 while S > 0 and 1e-12 otherwise.
  At a fixed horizon it is almost always negative; stopped at a fixed
  accumulated variance it is positive half the time.
* The self-p-hacking walk stops moving once its running Z crosses the
  critical value. An analyst who rejects whenever Z was ever significant
  is fooled; the fixed-variance rule is not.

Run:  python demos/02_stopping_rules.py
"""

from seqmart import TestConfig
from seqmart.calibration import CalibrationSpec, compare_stopping_rules
from seqmart.simulators import WalkParams, WalkVariant, simulate_walk

RUNS = 400

# %% a single state-dependent walk: long flat stretches below zero
tr = simulate_walk(WalkParams(WalkVariant.STATE_DEPENDENT, n_steps=10_000, seed=3))
below = (tr.s <= 0).mean()
print(f"one walk, 10^4 steps: S_T = {tr.s[-1]:.3f}, time spent at or below 0: {below:.1%}, V_T = {tr.v[-1]:.1f}")

# %% fixed horizon against fixed variance, on the same paths
c = compare_stopping_rules(CalibrationSpec("walk_state_dependent", RUNS, TestConfig(100.0), master_seed=1), 10_000)
print(f"\nstate-dependent walk, {RUNS} runs")
print(f"  fixed T = 10^4 : P(S < 0) = {c.fixed_horizon.negative_fraction:.3f}")
print(f"  first V >= 100 : P(S > 0) = {c.fixed_variance.positive_fraction:.3f}")

# %% the self-p-hacking walk
c = compare_stopping_rules(CalibrationSpec("walk_self_phacking", RUNS, TestConfig(100.0), master_seed=1), 1000)
print(f"\nself-p-hacking walk, {RUNS} runs, alpha = 0.05")
print(f"  reject if Z_t was ever significant (t <= 1000): {c.ever_significant_rate:.3f}")
print(f"  reject at first V >= 100                      : {c.fixed_variance.rejection_rate:.3f}")
print(f"  never reached V = 100 (frozen)                : {c.fixed_variance_not_stopped_rate:.3f}")
