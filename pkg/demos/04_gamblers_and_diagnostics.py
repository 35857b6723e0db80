"""
Double or quits, and the diagnostics that flag it
=================================================

A gambler bets 1 on a fair coin and doubles the stake after every loss,
stopping at the first win. Cumulative profit is a martingale, yet after t
rounds it is 1 with probability 1 - 2^-t. A few huge increments carry all
the variance, which is exactly what the Z-test diagnostics look for.

Run:  python demos/04_gamblers_and_diagnostics.py
"""

import numpy as np

from seqmart import TestConfig
from seqmart.core import decide
from seqmart.simulators import gambler_trace, simulate_double_or_quits

rng = np.random.default_rng(11)

# %% the two-point law of S_t
t, n = 10, 20_000
finals = np.array([simulate_double_or_quits(t, rng).cumulative[-1] for _ in range(n)])
print(f"after {t} rounds: P(S = 1) = {np.mean(finals == 1):.5f} (exact {1 - 2 ** -t:.5f}), "
      f"other value {np.unique(finals[finals != 1])} (exact {1 - 2 ** t})")

# %% a Z-test on one gambler who loses at least 7 times: stop once V >= 100
traj = simulate_double_or_quits(20, rng)
while traj.stopped_at is None or traj.stopped_at < 8:
    traj = simulate_double_or_quits(20, rng)
trace = gambler_trace(traj, 0.5)
out = decide(trace, TestConfig(v_threshold=100.0))
d = out.diagnostics
print(f"\ngambler who first wins on round {traj.stopped_at}")
print(f"  stakes      {traj.stakes[:traj.stopped_at].astype(int).tolist()}")
print(f"  status      {out.status.value}, stop index {out.stop_index}")
print(f"  max |X_t|   {d.max_abs_increment:.0f}  vs sqrt(V_T) = {np.sqrt(out.v_at_stop):.1f}")
print(f"  effective contributions {d.effective_contributions:.2f}")
print(f"  warnings    {[w.value for w in d.warnings]}")
