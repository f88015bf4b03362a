# %% [markdown]
# # Central planner against green signals
#
# A central planner picks the cheapest station for every request.  In the
# decentralized protocol each station only sees its own queue and answers
# with probability 10^-cost each step; the nearest answering station wins.
# Both solvers replay the same arrivals.

# %%
from __future__ import annotations

from evcharge import compare_solvers, from_dict

cfg = from_dict({"weights": {"mode": "fixed", "fixed": [1.0, 0.0, 0.0]}})
rep = compare_solvers(cfg, n_runs=4)
print(f"centralized   {rep.centralized_ict:6.1f} min")
print(f"decentralized {rep.decentralized_ict:6.1f} min  (ratio {rep.ratio:.3f})")
print(f"mean steps before the first green signal: {rep.mean_wait_steps:.2f} over {rep.n_assignments} requests")

# %% [markdown]
# The system-wide backlog (queued energy per station, as minutes of charging)
# follows the same shape under both solvers:

# %%
for t, c, d in list(zip(rep.sample_times, rep.centralized_series, rep.decentralized_series))[::30]:
    print(f"t={t / 3600:4.1f} h   centralized {c:6.1f}   decentralized {d:6.1f}")
print(f"RMSE between the two series: {rep.rmse_min:.2f} min")

# %% [markdown]
# With twelve single-plug stations this demand keeps every plug busy most of
# the afternoon.  Costs then exceed 1 and green signals become rare, so the
# wait before the first signal grows.  Adding stations reverses the picture:

# %%
from evcharge import with_overrides

roomy = compare_solvers(with_overrides(cfg, {"stations.count": 24}), n_runs=2)
print(f"24 stations: ratio {roomy.ratio:.3f}, mean wait {roomy.mean_wait_steps:.2f} steps")
