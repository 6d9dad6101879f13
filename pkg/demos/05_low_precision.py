# %% [markdown]
# # Low-precision storage
# Each float field keeps a sign, a short exponent and a truncated significand.
# Randomized rounding keeps the power sums unbiased, so errors average out
# when many cells are merged.

# %%
import numpy as np

from momentsketch import decode, encode_low_precision, fit_sketch
from momentsketch.harness.evaluate import errors_for
from momentsketch.maxent import PHIS
from momentsketch.sketch import SketchArray

rng = np.random.default_rng(5)
n_cells, per = 20_000, 20
x = rng.exponential(size=n_cells * per)
cells = SketchArray.from_groups(x, np.repeat(np.arange(n_cells), per), n_cells, 10)
print("full precision:", len(cells[0].to_bytes()), "bytes per cell, eps_avg",
      f"{errors_for(x, fit_sketch(cells.merged()).quantiles(PHIS)).mean():.2e}")

for bits in (32, 20, 16, 12):
    enc = [encode_low_precision(cells[i], bits, rng) for i in range(n_cells)]
    merged = SketchArray.from_sketches([decode(e) for e in enc], order=10).merged()
    dist = fit_sketch(merged)
    if not dist.converged:
        # rounding noise this coarse can make the moments inconsistent
        print(f"{bits:2d} bits: {enc[0].nbytes} bytes per cell, solve did not converge")
        continue
    eps = errors_for(x, dist.quantiles(PHIS)).mean()
    print(f"{bits:2d} bits: {enc[0].nbytes} bytes per cell, eps_avg {eps:.2e}")
