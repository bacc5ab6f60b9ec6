"""
Heavy tails of returns and trading volume
=========================================

Tail exponents from the Hill estimator with a bootstrap choice of ``k``,
compared with a Gaussian sample of the same size.
"""

# %%
import numpy as np

from mfmarket import ModelConfig, UniformHeterogeneous, run_simulation
from mfmarket.stats import classify_tail, log_returns, normalize, optimal_k, survival

cfg = ModelConfig(n_agents=2000, mu_spec=UniformHeterogeneous(10.0, 200.0), tau=1000, t_steps=60_000, seed=3)
series = run_simulation(cfg)
r = normalize(log_returns(series.price[cfg.tau:])).values
volume = series.volume[cfg.tau + 1:].astype(float)

# %%
# Probability of exceeding a few thresholds, model vs standard normal draws.
gauss = np.random.default_rng(0).standard_normal(len(r))
for x in (2, 4, 6, 8):
    print(f"P(|r| > {x}): model {survival(np.abs(r), x):.2e}   normal {survival(np.abs(gauss), x):.2e}")

# %%
for sign in ("positive", "negative"):
    est = optimal_k(r, sign)
    print(f"{sign:8s} tail: alpha = {est.alpha:.2f} at k = {est.k}, flat Hill curve: {est.plateau}")
est = optimal_k(volume)
print(f"volume tail: zeta_V = {est.alpha:.2f} at k = {est.k}")

# %%
print("tail regime of the returns:", classify_tail(r).regime)
print("tail regime of the Gaussian sample:", classify_tail(gauss).regime)
