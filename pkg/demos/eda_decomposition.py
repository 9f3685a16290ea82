"""Split a skin conductance trace into tonic level, phasic responses and driver.

    python demos/eda_decomposition.py
"""

import numpy as np

from affectpipe import eda

rate, n = 4.0, 480                                   # two minutes at 4 Hz
rng = np.random.default_rng(0)
onsets, amps = [60, 200, 330], [0.4, 0.25, 0.6]      # samples, uS
truth = sum(eda.scr_response(n, rate, o, a) for o, a in zip(onsets, amps))
y = 2.0 + 0.003 * np.arange(n) / rate + truth + rng.normal(0, 1e-3, n)

d = eda.cvxeda_decompose(y, rate_hz=rate)
print(f"solver: {d.solver_stats.status} after {d.solver_stats.iterations} iterations")
print(f"tonic level {d.tonic.mean():.3f} uS, phasic area {eda.phasic_auc(d):.2f} uS*s")
for start, stop in eda.driver_bursts(d.driver, rate):
    peak = start + int(np.argmax(d.driver[start:stop]))
    print(f"  burst at {peak / rate:6.2f} s")
print("injected onsets at", [o / rate for o in onsets], "s")
