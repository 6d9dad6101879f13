# %% [markdown]
# # Quantiles from a sketch
# The estimator fits the maximum-entropy density that matches the sketch's
# moments, then inverts its cdf.  Error is the normalized rank displacement.

# %%
import numpy as np

from momentsketch import MomentsSketch, fit_sketch, quantile_error_bound
from momentsketch.harness.evaluate import errors_for
from momentsketch.maxent import PHIS

rng = np.random.default_rng(1)
datasets = {
    "exponential": rng.exponential(size=1_000_000),
    "lognormal": rng.lognormal(0, 1, size=1_000_000),
    "gamma(0.1)": rng.gamma(0.1, size=1_000_000),
    "normal": rng.normal(size=1_000_000),
}

for name, x in datasets.items():
    dist = fit_sketch(MomentsSketch.from_values(x, 10))
    est = dist.quantiles(PHIS)
    b = dist.basis
    print(f"{name:12s} k1={b.k1:2d} k2={b.k2:2d}  eps_avg={errors_for(x, est).mean():.2e}")

# %% [markdown]
# Every estimate can be paired with a worst-case error bound that holds for
# any dataset with the same moments.

# %%
x = datasets["exponential"]
sk = MomentsSketch.from_values(x, 10)
dist = fit_sketch(sk)
for phi in (0.5, 0.9, 0.99):
    q = dist.quantile(phi)
    print(f"phi={phi}: estimate {q:.4f}, true {np.quantile(x, phi):.4f}, "
          f"worst-case error {quantile_error_bound(sk, q, phi):.3f}")
