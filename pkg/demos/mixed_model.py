"""Fit the progress model and check that it recovers known coefficients.

    python demos/mixed_model.py
"""

import numpy as np

from affectpipe import lmm

# 23 subjects, 6 ratings each, generated from the model with known coefficients
obs = lmm.simulate(seed=3)
fit = lmm.fit_lmm(obs)
print(lmm.render_table(fit))

# Averaged over many simulated studies the estimates centre on the truth.
est = np.array([lmm.fit_lmm(lmm.simulate(seed=s), analyses=False).beta for s in range(50)])
for term, true, mean in zip(lmm.TERMS, lmm.REFERENCE_BETA, est.mean(axis=0)):
    print(f"{term:>14}: true {true:+.3f}  mean estimate {mean:+.3f}")
