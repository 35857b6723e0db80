"""
Tangent-sequence randomization and where it breaks
==================================================

Redrawing each increment from its conditional law given the observed
history gives a null ensemble for S_T. On the block task this agrees with
the Z-test. For a fair-odds doubling gambler it rejects at level alpha on
every run, even though the null is true.

Run:  python demos/03_tangent_sequences.py
"""

import numpy as np

from seqmart import TestConfig, run_sequential_test
from seqmart.core import TrialArrays
from seqmart.simulators import IblParams, session_to_trials, simulate_fair_odds_gambler, simulate_ibl_session
from seqmart.tangent import exact_tangent_distribution, gambler_tangent_steps, steps_from_trials, tangent_test_pvalue

cfg = TestConfig(300.0)

# %% block task: tangent p against Z-test p
print("block task, 6 sessions (10^4 tangent replicates each)")
for seed in range(6):
    p = IblParams(w_a=float(seed % 2), seed=seed)
    trials = session_to_trials(simulate_ibl_session(p), p)
    out = run_sequential_test(trials, cfg)
    t = out.stop_index
    head = TrialArrays(trials.b[:t], trials.r[:t], trials.r_mean[:t], trials.r_var[:t])
    p_t, _ = tangent_test_pvalue(out.s_at_stop, steps_from_trials(head), 10_000, seed)
    print(f"  W_A={p.w_a:.0f}  Z p = {out.p_value:.4f}   tangent p = {p_t:.4f}")

# %% the fair-odds gambler: win probability alpha, payoff 1/alpha - 1, stake doubles until a win
alpha = 0.25
rng = np.random.default_rng(7)
print(f"\nfair-odds gambler, alpha = {alpha}")
for _ in range(5):
    traj = simulate_fair_odds_gambler(alpha, rng)
    steps = gambler_tangent_steps(traj, alpha)
    s_obs = traj.cumulative[-1]
    atoms, probs = exact_tangent_distribution(steps)
    tail = probs[atoms >= s_obs - 1e-9 * abs(s_obs)].sum()
    _, ens = tangent_test_pvalue(s_obs, steps, 10_000, rng)
    print(f"  T={traj.stopped_at:2d}  S_T={s_obs:8.0f}  exact P(S' >= S_T) = {tail:.4f}"
          f"   empirical {1 - alpha:.2f}-quantile = {ens.quantile(1 - alpha):8.0f}")

# %% why: S_T beats every tangent outcome whose final bet loses and ties or trails every
# outcome whose final bet wins, so its exact rank p-value is alpha whatever T is. The (1 - alpha)
# quantile sits on the gap between those two groups, so an empirical quantile from a finite
# ensemble lands on either side of S_T about half the time.
