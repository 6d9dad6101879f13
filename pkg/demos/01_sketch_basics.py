# %% [markdown]
# # Moments sketch basics
# A sketch stores min, max, count and the first k power sums and log sums.
# Merging is field-wise addition, so partial sketches combine exactly.

# %%
import numpy as np

from momentsketch import MomentsSketch

rng = np.random.default_rng(0)
x = rng.exponential(size=10_000)

whole = MomentsSketch.from_values(x, order=10)
parts = [MomentsSketch.from_values(p, order=10) for p in np.array_split(x, 7)]
merged = parts[0]
for p in parts[1:]:
    merged = merged.merge(p)

print(whole)
print("max relative field difference after merging 7 parts:",
      np.max(np.abs(merged.fields() - whole.fields()) / np.abs(whole.fields())))

# %% [markdown]
# The binary form is fixed size: 192 bytes at order 10, whatever the data size.

# %%
blob = whole.to_bytes()
print(len(blob), "bytes;", MomentsSketch.from_bytes(blob) == whole)

# %% [markdown]
# Subtracting a sub-multiset is exact for the sums, but the extrema can no
# longer be known, so the result is flagged until they are supplied.

# %%
rest = whole.subtract(parts[0])
print("stale extrema:", rest.extrema_stale)
tail = x[parts[0].count:]
rest = rest.with_extrema(float(tail.min()), float(tail.max()))
print(rest)
