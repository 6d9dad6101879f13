# %% [markdown]
# # Threshold queries through the cascade
# "Which groups have a 70th percentile above the global 99th?"  Most groups
# are settled by cheap moment bounds; only a few need a full solve.

# %%
import numpy as np

from momentsketch.harness.cube import build_cube, query_threshold_groups

rng = np.random.default_rng(2)
n_groups, per = 2000, 60
g = np.repeat(np.arange(n_groups), per)
scale = rng.lognormal(0, 0.5, n_groups)
x = rng.exponential(scale[g])
cube = build_cube(x, {"host": g}, cell_size=20)

ans = query_threshold_groups(cube, ["host"], phi=0.7, global_phi=0.99)
print(f"global p99 = {ans.t:.3f}; {len(ans.qualifying)} of {len(ans.groups)} hosts qualify")
for stage, frac in ans.stats.fractions().items():
    lat = ans.stats.mean_latency()[stage]
    print(f"  {stage:7s} resolved {frac:6.1%}  mean {lat * 1e3:7.3f} ms")
