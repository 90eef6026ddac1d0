"""
Matching credible and bootstrap radii
=====================================

The precision eta is tuned until the 95% credible ball has the radius of
the 95% bootstrap ball. Here the posterior is Normal(xbar, 1/(n eta)), so
the answer is known: eta is about 1 / s^2.
"""

import numpy as np

from seqgibbs.calibration import (
    CalibrationConfig,
    bootstrap_radius,
    credible_radius,
    stochastic_approximation,
)
from seqgibbs.sampling import RngStream

x = RngStream(3).generator.standard_normal(400) * 2.0
n = x.size

r_b, _ = bootstrap_radius(np.mean, x, 2000, 0.05, lambda f, e: abs(f - e), RngStream(4))
print("bootstrap radius:", round(r_b, 4))


def radius(eta, stream):
    sampler = lambda e, M, gen: x.mean() + gen.standard_normal(M) / np.sqrt(n * e)
    return credible_radius(sampler, eta, 4000, x.mean(), 0.05,
                           lambda d, c: np.abs(d - c), stream)


eta, trace = stochastic_approximation(radius, r_b, CalibrationConfig(eta0=0.01), RngStream(5))
for t, e, r, d in trace.iterations:
    print(f"  t={t:2d}  eta={e:.4f}  r_g={r:.4f}  relative gap={d:+.3f}")
print("stopped by", trace.termination_reason, "at eta =", round(eta, 4))
print("1 / s^2 =", round(1 / x.var(), 4))
