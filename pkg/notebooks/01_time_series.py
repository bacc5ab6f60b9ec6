"""
Price, returns and volatility of one simulated market
=====================================================

A single small run with homogeneous agents. Run with ``python 01_time_series.py``.
"""

# %%
import numpy as np

from mfmarket import Homogeneous, ModelConfig, run_simulation
from mfmarket.stats import log_returns, normalize, rolling_volatility

cfg = ModelConfig(n_agents=2000, mu_spec=Homogeneous(100.0), tau=1000, t_steps=30_000, seed=1)
series = run_simulation(cfg)
print(f"{len(series)} prices, final p = {series.price[-1]:.4f}")

# %%
# The moving average is what agents treat as the fundamental value.
p_star = series.moving_average()
warm = cfg.tau
gap = np.log(series.price[warm:] / p_star[warm:])
print(f"log distance from the moving average: mean {gap.mean():+.4f}, sd {gap.std():.4f}")

# %%
# Participation is bursty: most steps see few traders, a few see many.
n = series.n_traders[warm + 1:]
print("traders per step, quantiles 50/90/99/max:", np.percentile(n, [50, 90, 99]).astype(int), n.max())

# %%
r = normalize(log_returns(series.price[warm:])).values
sigma = rolling_volatility(r, 100)
print(f"normalized returns: max |r| = {np.abs(r).max():.1f}")
print(f"rolling volatility (window 100): min {sigma.min():.3f}, median {np.median(sigma):.3f}, max {sigma.max():.3f}")
