"""
Return density implied by a power-law number of traders
=======================================================

A Gaussian mixture over the number of traders, its continuum limit written
with Kummer's function, and the predicted tail exponent ``alpha = 2 zeta_V``.
"""

# %%
import numpy as np

from mfmarket.analytic import (
    MixtureParams,
    closed_form_constant,
    closed_form_density,
    mixture_density,
    predicted_alpha,
)

zeta_v = 1.5
r = np.array([0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0])
closed = closed_form_density(r, zeta_v)
mixture = mixture_density(r, MixtureParams(zeta_v, 10_000))
for x, c, m in zip(r, closed, mixture):
    print(f"r = {x:5.1f}: closed form {c:.3e}   mixture {m:.3e}   ratio {m / c:.3f}")

# %%
# The two agree in shape far out but not in weight: the sum starts with a
# heavy n = 1 term that the integral spreads out.
print(f"density at 0 from the exact constant: {closed_form_constant(zeta_v):.6f}")

# %%
grid = np.geomspace(20, 200, 30)
slope = np.polyfit(np.log(grid), np.log(closed_form_density(grid, zeta_v)), 1)[0]
print(f"density tail slope {slope:.3f}; CCDF exponent {-slope - 1:.3f}; predicted {predicted_alpha(zeta_v):g}")
