# %% [markdown]
# # Who gets the traffic in the city
#
# The same twelve stations now sit on a small synthetic street network with
# one-way rows.  Eight stations have solar or wind generation, four have
# none.  We compare drivers who only care about price with drivers who weigh
# time, price and distance equally.

# %%
from __future__ import annotations

import numpy as np

from evcharge import from_dict, participation_entropy, participation_factors, run_monte_carlo, with_overrides

city = from_dict({
    "arena": {"mode": "road_graph", "graph": "builtin:synthetic_city"},
    "weights": {"fixed": [0.0, 1.0, 0.0]},
    "monte_carlo": {"n_runs": 3},
})  # fmt: skip
price_runs = run_monte_carlo(city)
balanced_runs = run_monte_carlo(with_overrides(city, {"weights.fixed": [1 / 3, 1 / 3, 1 - 2 / 3]}))

# %%
pf_price = participation_factors(price_runs)
pf_bal = participation_factors(balanced_runs)
generated = np.mean([r.generated_kwh for r in price_runs], axis=0)
print("station  kind   generated kWh  share(price)  share(balanced)")
for sid in price_runs[0].station_ids:
    kind = price_runs[0].station_kinds[sid]
    print(f"{sid:7d}  {kind:5s}  {generated[sid]:13.1f}  {pf_price[sid]:12.3f}  {pf_bal[sid]:15.3f}")

# %% [markdown]
# Entropy measures how evenly requests spread; price-driven drivers pile onto
# the green stations, the balanced population spreads out.

# %%
print(f"entropy price-only {participation_entropy(pf_price):.3f}, balanced {participation_entropy(pf_bal):.3f}")
print(f"uniform would be {np.log(len(pf_price)):.3f}")
