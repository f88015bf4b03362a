# %% [markdown]
# # One simulated afternoon
#
# Twelve stations sit on a 3 km square and about 500 drivers ask for a charge
# over seven hours.  Every driver here cares only about time.  We run one
# seeded scenario and read the three indices off the result.

# %%
from __future__ import annotations

import numpy as np

from evcharge import from_dict, index_charging_time, index_distance, index_energy_price, run_scenario

cfg = from_dict({"weights": {"mode": "fixed", "fixed": [1.0, 0.0, 0.0]}})
run = run_scenario(cfg, seed=0)
print(f"{len(run.vehicles)} requests, {len(run.completed)} fully charged before the horizon")

# %% [markdown]
# Charging time counts from the request to the end of the charge, so it
# includes travel, queueing and the charge itself.

# %%
print(f"mean charging time  {index_charging_time(run):6.1f} min")
print(f"mean grid price     {index_energy_price(run):6.3f} EUR/kWh")
print(f"mean distance       {index_distance(run):6.3f} (unit square)")

# %% [markdown]
# Queues are where the time goes.  The longest queue seen at each station:

# %%
for sid, longest in zip(run.station_ids, run.queue_length.max(axis=0)):
    print(f"station {sid:2d}  kind {run.station_kinds[sid]:5s}  longest queue {int(longest)}")
print("mean queue over time:", np.round(run.queue_length.mean(), 2))
