"""Trajectory Forcing schedule: decaying intervention frequency and the
matching growth of self-generated segment lengths.

Run:  python3 demos/03_curriculum.py
"""

import numpy as np

from ssmail import curriculum as cur

total = 200
sched = cur.schedule_from_fraction(0.15, total)   # beta = 15% of the run
print(f"beta = {sched.beta} epochs, base = {sched.base}\n")
print(f"{'epoch':>6} {'frequency':>10} {'expected segment':>17}")
for epoch in [0, 10, 30, sched.beta, 60, 100, 150, 199]:
    f = cur.intervention_frequency(sched, epoch)
    L = cur.expected_segment_length(sched, epoch)
    print(f"{epoch:>6.0f} {f:>10.4f} {L:>17.3f}")

# The Bernoulli interventions really do produce geometric gaps of mean 1/f.
rng = np.random.default_rng(0)
freq = cur.intervention_frequency(sched, 60)
plan = cur.apply_forcing(100_000, None, freq, rng)
print(f"\nfrequency at epoch 60: {freq:.4f}")
print(f"empirical intervention rate: {plan.decisions.mean():.4f}")
print(f"mean realized segment length: {plan.mean_segment_length:.3f} "
      f"(expected about {1 / freq - 1:.3f} free steps per intervention)")
