# %% [markdown]
# # Sliding windows with turnstile updates
# Panes of 10 time units, windows of 12 panes.  The window sketch advances by
# subtracting the oldest pane and merging the newest one.

# %%
import numpy as np

from momentsketch.harness import datagen
from momentsketch.harness.window import PaneSeries, query_sliding_window

ts, vals = datagen.spike_workload(seed=4)
panes = PaneSeries.from_values(ts, vals, pane_width=10.0, order=10, origin=0.0)
res = query_sliding_window(panes, window_width=120.0, phi=0.99, t=1500.0)

flagged = [r for r in res if r.flagged]
print(f"{len(flagged)} of {len(res)} windows have p99 > 1500")
print("flagged window starts:", [int(r.start) for r in flagged])
