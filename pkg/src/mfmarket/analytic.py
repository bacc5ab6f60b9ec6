"""Analytic return distribution implied by a power-law trader count.

If ``n`` traders produce a Gaussian return with variance ``n`` and ``n`` has
a power-law distribution with CCDF exponent ``zeta_v``, the return density
is the finite mixture

    f_N(r) ∝ sum_{n=1}^{N} n^{-(zeta_v + 1)} (2 pi n)^{-1/2} exp(-r^2 / 2n).

Replacing the sum by an integral over ``n in [1, inf)`` gives

    f(r) = C * M(zeta_v + 1/2, zeta_v + 3/2, -r^2 / 2)

with ``M`` Kummer's confluent hypergeometric function. Substituting
``s = r^2 / 2n`` gives the equivalent incomplete-gamma form
``a x^{-a} gamma_lower(a, x)`` with ``a = zeta_v + 1/2`` and ``x = r^2/2``,
and the exact normalisation ``C = zeta_v / ((zeta_v + 1/2) sqrt(2 pi))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

__all__ = [
    "MixtureParams",
    "SERIES_LIMIT",
    "kummer_m",
    "mixture_density",
    "closed_form_density",
    "closed_form_unnormalized",
    "closed_form_constant",
    "predicted_alpha",
    "mixture_vs_closed_form",
]

# |z| above which M(a, a+1, z < 0) switches from the series to the incomplete gamma
SERIES_LIMIT = 30.0

_SERIES_TOL = 1e-17
_SERIES_MAX_TERMS = 100_000


def _check_b(b: float) -> None:
    if b <= 0 and float(b).is_integer():
        raise ValueError(f"b must not be a non-positive integer, got {b!r}")


def _series_log(a: float, b: float, z: float) -> tuple[float, float]:
    """``sum_k (a)_k z^k / ((b)_k k!)`` as ``(sign, log|value|)``.

    Terms are accumulated relative to the running maximum so very large
    positive-term sums do not overflow.
    """
    total = 1.0
    term = 1.0
    scale = 0.0  # log of the factor pulled out of ``total`` and ``term``
    k = 0
    while True:
        term *= (a + k) * z / ((b + k) * (k + 1))
        k += 1
        total += term
        if abs(total) > 1e250:
            total *= 1e-250
            term *= 1e-250
            scale += 250 * math.log(10)
        if abs(term) <= _SERIES_TOL * abs(total) and k > abs(z):
            break
        if term == 0.0:
            break
        if k > _SERIES_MAX_TERMS:
            raise ArithmeticError(f"Kummer series did not converge for a={a}, b={b}, z={z}")
    if total == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, total), math.log(abs(total)) + scale


def _kummer_series(a: float, b: float, z: float) -> float:
    """Series evaluation; negative ``z`` goes through Kummer's transformation.

    ``M(a, b, z) = e^z M(b - a, b, -z)`` turns the alternating series into
    one whose terms change sign at most ``ceil(a - b)`` times (never when
    ``b >= a``), which avoids the cancellation of the direct series at large
    negative ``z``.
    """
    if z < 0:
        sign, logv = _series_log(b - a, b, -z)
        return sign * math.exp(logv + z)
    sign, logv = _series_log(a, b, z)
    return sign * math.exp(logv)


def _kummer_incgamma(a: float, x: float) -> float:
    """``M(a, a + 1, -x) = a x^{-a} gamma_lower(a, x)`` for ``x > 0``."""
    return math.exp(math.log(a) - a * math.log(x) + special.gammaln(a)) * float(special.gammainc(a, x))


def kummer_m(a: float, b: float, z):
    """Kummer's function ``M(a, b, z)`` for real arguments.

    For ``b == a + 1`` and ``z < -SERIES_LIMIT`` the lower incomplete gamma
    route is used; everywhere else the power series (with Kummer's
    transformation for negative ``z``). Accepts scalar or array ``z``.

    Full double precision is expected for ``b >= a``. For ``b < a`` and large
    negative ``z`` the result can be exponentially small through
    cancellation and loses relative accuracy.
    """
    _check_b(b)
    zs = np.asarray(z, dtype=float)
    out = np.empty(zs.shape)
    flat_in = zs.ravel()
    flat_out = out.ravel()
    incgamma_ok = b == a + 1 and a > 0
    for i, zi in enumerate(flat_in):
        if zi == 0.0:
            flat_out[i] = 1.0
        elif incgamma_ok and zi < -SERIES_LIMIT:
            flat_out[i] = _kummer_incgamma(a, -zi)
        else:
            flat_out[i] = _kummer_series(a, b, zi)
    return float(out) if out.ndim == 0 else out


def _check_zeta(zeta_v: float) -> None:
    if not (zeta_v > 0 and math.isfinite(zeta_v)):
        raise ValueError(f"zeta_v must be positive, got {zeta_v!r}")


def closed_form_unnormalized(r, zeta_v: float):
    """``M(zeta_v + 1/2, zeta_v + 3/2, -r^2/2)``; equals 1 at ``r = 0``."""
    _check_zeta(zeta_v)
    a = zeta_v + 0.5
    return kummer_m(a, a + 1.0, -0.5 * np.square(np.asarray(r, dtype=float)))


def closed_form_constant(zeta_v: float) -> float:
    """Exact normaliser ``zeta_v / ((zeta_v + 1/2) sqrt(2 pi))``.

    Identical to ``Gamma(1/2 + z) Gamma(1 + z) / (sqrt(2 pi) Gamma(z) Gamma(3/2 + z))``.
    """
    _check_zeta(zeta_v)
    return zeta_v / ((zeta_v + 0.5) * math.sqrt(2.0 * math.pi))


@lru_cache(maxsize=64)
def _closed_form_norm(zeta_v: float) -> float:
    # the tail decays as r^-(2 zeta + 1); split the range so quad sees the core
    core, _ = integrate.quad(lambda r: closed_form_unnormalized(r, zeta_v), 0.0, 10.0,
                             epsabs=0.0, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(lambda r: closed_form_unnormalized(r, zeta_v), 10.0, np.inf,
                             epsabs=0.0, epsrel=1e-12, limit=400)
    return 2.0 * (core + tail)


def closed_form_density(r, zeta_v: float):
    """Continuum-limit return density, normalised by quadrature."""
    return closed_form_unnormalized(r, zeta_v) / _closed_form_norm(float(zeta_v))


@dataclass(frozen=True)
class MixtureParams:
    """Finite mixture over ``n = 1..n_max`` traders with CCDF exponent ``zeta_v``.

    ``normalization`` is ``sum_n n^-(zeta_v + 1)``; every conditional is a
    normalised Gaussian, so dividing by it makes the mixture a density.
    """

    zeta_v: float
    n_max: int

    def __post_init__(self):
        _check_zeta(self.zeta_v)
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.arange(1, self.n_max + 1, dtype=float) ** -(self.zeta_v + 1.0)

    @property
    def normalization(self) -> float:
        return math.fsum(self.weights)


def mixture_density(r, params: MixtureParams):
    """Finite-``N`` mixture of zero-mean Gaussians with variance ``n``."""
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    n = np.arange(1, params.n_max + 1, dtype=float)
    w = params.weights / params.normalization / np.sqrt(2.0 * math.pi * n)
    half_inv_n = 0.5 / n
    out = np.empty(flat.shape)
    chunk = max(1, 2_000_000 // params.n_max)
    for i in range(0, len(flat), chunk):
        rr = flat[i:i + chunk]
        out[i:i + chunk] = np.exp(-np.outer(rr * rr, half_inv_n)) @ w
    out = out.reshape(r.shape)
    return float(out) if out.ndim == 0 else out


def predicted_alpha(zeta_v: float) -> float:
    """CCDF tail exponent of returns implied by the volume exponent: ``2 zeta_v``."""
    _check_zeta(zeta_v)
    return 2.0 * zeta_v


def mixture_vs_closed_form(zeta_v: float, n_max: int, r_grid) -> float:
    """Largest relative deviation of the finite mixture from the closed form on ``r_grid``."""
    r_grid = np.asarray(r_grid, dtype=float)
    mix = mixture_density(r_grid, MixtureParams(zeta_v, n_max))
    cf = closed_form_density(r_grid, zeta_v)
    return float(np.max(np.abs(mix - cf) / cf))
