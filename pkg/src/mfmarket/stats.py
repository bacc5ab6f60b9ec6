"""Observables of a price/volume series.

Returns and volatility, empirical CCDFs, Hill tail estimates with
subsample-bootstrap choice of the order statistic, autocorrelations,
structure functions and a log-normal bulk fit.

Conventions: standard deviations use the ``n - 1`` denominator throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize
from scipy import stats as sps

__all__ = [
    "TailWarning",
    "ReturnSeries",
    "TailEstimate",
    "BootstrapConfig",
    "AcfResult",
    "MultifractalSpectrum",
    "LogNormalFit",
    "TailRegime",
    "log_returns",
    "normalize",
    "rolling_volatility",
    "ccdf",
    "survival",
    "tail_slope",
    "tail_values",
    "hill_gamma",
    "hill_curve",
    "optimal_k",
    "autocorrelation",
    "structure_functions",
    "fit_scaling",
    "lognormal_fit",
    "classify_tail",
]


class TailWarning(UserWarning):
    """Raised for degenerate or under-sampled tail estimates."""


@dataclass(frozen=True)
class ReturnSeries:
    values: np.ndarray
    delta_t: int
    normalized: bool = False

    def __len__(self):
        return len(self.values)


def log_returns(prices, delta_t: int = 1) -> ReturnSeries:
    """``ln(p[t + delta_t] / p[t])`` for every admissible ``t``."""
    prices = np.asarray(prices, dtype=float)
    if delta_t < 1:
        raise ValueError("delta_t must be >= 1")
    if delta_t >= len(prices):
        raise ValueError(f"delta_t={delta_t} must be smaller than the series length {len(prices)}")
    if np.any(prices <= 0):
        raise ValueError("prices must be positive")
    lp = np.log(prices)
    return ReturnSeries(lp[delta_t:] - lp[:-delta_t], delta_t, normalized=False)


def normalize(series: ReturnSeries) -> ReturnSeries:
    """Subtract the mean and divide by the standard deviation of the whole series."""
    x = np.asarray(series.values, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two values to normalize")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValueError("cannot normalize a zero-variance series")
    z = (x - x.mean()) / sd
    # one refinement pass removes the rounding left by the first transform
    z = (z - z.mean()) / z.std(ddof=1)
    return ReturnSeries(z, series.delta_t, normalized=True)


def rolling_volatility(returns, window: int = 100) -> np.ndarray:
    """Sample standard deviation over ``[t, t + window)``; length ``len - window + 1``."""
    x = np.asarray(getattr(returns, "values", returns), dtype=float)
    if window < 2:
        raise ValueError("window must be >= 2")
    if window > len(x):
        raise ValueError(f"window={window} exceeds series length {len(x)}")
    view = sliding_window_view(x, window)
    out = np.empty(len(view))
    chunk = max(1, 2_000_000 // window)
    for i in range(0, len(view), chunk):
        out[i:i + chunk] = view[i:i + chunk].std(axis=1, ddof=1)
    return out


def ccdf(samples):
    """Empirical complementary CDF on the sorted unique sample values.

    Returns ``(x, p)`` with ``p[j] = P(X >= x[j])``, which equals
    ``P(X > x[j-1])``: strictly decreasing, in ``(0, 1]``, ``p[0] == 1``.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if len(x) == 0:
        raise ValueError("ccdf of an empty sample")
    ux, first = np.unique(x, return_index=True)
    return ux, (len(x) - first) / len(x)


def survival(samples, x):
    """``P(X > x)`` evaluated at arbitrary points."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if len(s) == 0:
        raise ValueError("survival of an empty sample")
    above = len(s) - np.searchsorted(s, x, side="right")
    return above / len(s)


def tail_slope(samples, p_hi: float = 1e-1, p_lo: float = 1e-3) -> float:
    """Least-squares slope of ``log P(X >= x)`` vs ``log x`` where ``p_lo <= P <= p_hi``."""
    x, p = ccdf(samples)
    sel = (p <= p_hi) & (p >= p_lo) & (x > 0)
    if sel.sum() < 3:
        raise ValueError("too few points in the requested tail range")
    return float(np.polyfit(np.log(x[sel]), np.log(p[sel]), 1)[0])


def tail_values(samples, tail_sign: str = "positive") -> np.ndarray:
    """Magnitudes on one tail, sorted in descending order.

    The negative tail is the absolute value of the negative samples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if tail_sign == "positive":
        t = x[x > 0]
    elif tail_sign == "negative":
        t = -x[x < 0]
    else:
        raise ValueError(f"tail_sign must be 'positive' or 'negative', got {tail_sign!r}")
    return np.sort(t)[::-1]


def _hill_from_sorted(desc: np.ndarray, ks) -> np.ndarray:
    """Hill statistics for each ``k`` given magnitudes sorted descending."""
    logs = np.log(desc)
    csum = np.cumsum(logs)
    ks = np.asarray(ks, dtype=np.int64)
    return csum[ks - 1] / ks - logs[ks]


def hill_gamma(samples, k: int, tail_sign: str = "positive") -> float:
    """Hill statistic ``(1/k) sum_{i<=k} ln(X_(i) / X_(k+1))`` on one tail.

    ``X_(1) >= X_(2) >= ...`` are the tail magnitudes. The tail exponent of
    the cumulative distribution is ``1 / gamma``.
    """
    desc = tail_values(samples, tail_sign)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(desc) < k + 1:
        raise ValueError(f"need at least k+1={k + 1} values on the {tail_sign} tail, have {len(desc)}")
    gamma = float(_hill_from_sorted(desc, [k])[0])
    if gamma == 0.0:
        warnings.warn("degenerate tail: the top order statistics are all equal", TailWarning, stacklevel=2)
    return gamma


def hill_curve(samples, ks, tail_sign: str = "positive") -> np.ndarray:
    """Hill statistic for every ``k`` in ``ks`` (``nan`` where the tail is too short)."""
    desc = tail_values(samples, tail_sign)
    ks = np.asarray(ks, dtype=np.int64)
    out = np.full(len(ks), np.nan)
    ok = (ks >= 1) & (ks < len(desc))
    if ok.any():
        out[ok] = _hill_from_sorted(desc, ks[ok])
    return out


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings for the subsample bootstrap choice of ``k``.

    ``plateau_window`` is a count of consecutive grid points; the flattest
    such window starting at ``k >= plateau_min_k`` gives the reference value.
    The tail counts as a plateau when the fitted relative drift of
    ``gamma_k`` over all ``k >= plateau_min_k`` stays under ``plateau_tol``.
    Below ``plateau_min_k`` the Hill noise ``~1/sqrt(k)`` is too large to
    judge flatness.
    """

    n_boot: int = 100
    subsample_fraction: float = 0.1
    grid_points: int = 50
    k_min: int = 10
    seed: int = 0
    plateau_window: int = 10
    plateau_tol: float = 0.25
    plateau_min_k: int = 200

    def __post_init__(self):
        if self.n_boot < 1:
            raise ValueError("bootstrap_b must be >= 1")
        if not 0 < self.subsample_fraction < 1:
            raise ValueError("bootstrap_fraction must lie in (0, 1)")
        if self.grid_points < 2:
            raise ValueError("k_grid_points must be >= 2")
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        if self.plateau_window < 3:
            raise ValueError("plateau_window must be >= 3")


@dataclass(frozen=True)
class TailEstimate:
    """Tail exponent ``alpha = 1 / gamma`` at the selected order statistic ``k``.

    ``k_diagnostics`` has one row per grid point: ``k``, the full-sample
    ``gamma_k`` and the bootstrap mean-squared deviation.
    """

    alpha: float
    gamma: float
    k: int
    k_diagnostics: np.ndarray
    tail_sign: str
    n: int
    plateau: bool
    plateau_gamma: float
    plateau_drift: float
    plateau_k: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not 1 <= self.k < self.n:
            raise ValueError(f"k={self.k} outside [1, {self.n})")


def _find_plateau(ks: np.ndarray, gammas: np.ndarray, window: int, min_k: int = 1):
    """Window of the Hill curve with the smallest relative RMS spread.

    Returns ``(start, stop, mean_gamma, relative_drift)``. The drift is the
    least-squares slope of the curve in ``ln k`` over every grid point with
    ``k >= min_k``, times that ``ln k`` span, divided by ``mean_gamma``. A
    single window is too short to tell a slow logarithmic climb (light
    tails) from noise, so the drift uses the whole eligible range.
    """
    window = min(window, len(ks))
    best = None
    lk = np.log(ks)
    starts = [i for i in range(len(ks) - window + 1) if ks[i] >= min_k]
    if not starts:
        starts = range(len(ks) - window + 1)
    for i in starts:
        g = gammas[i:i + window]
        mean = g.mean()
        if not mean > 0:
            continue
        spread = np.sqrt(np.mean((g - mean) ** 2)) / mean
        if best is None or spread < best[0]:
            best = (spread, i, mean)
    if best is None:
        raise ValueError("no usable window on the Hill curve")
    _, i, mean = best
    sel = (ks >= min_k) & (gammas > 0)
    if np.count_nonzero(sel) < 2:
        sel = slice(i, i + window)
    slope = np.polyfit(lk[sel], gammas[sel], 1)[0]
    drift = abs(slope) * (lk[sel].max() - lk[sel].min()) / mean
    return i, i + window, float(mean), float(drift)


def optimal_k(samples, tail_sign: str = "positive", cfg: BootstrapConfig | None = None) -> TailEstimate:
    """Hill estimate with the order statistic chosen by subsample bootstrap.

    The full-sample Hill curve is evaluated on a geometric grid of ``k``
    between ``cfg.k_min`` and ``n * subsample_fraction``. Its flattest window
    gives the plateau value ``gamma_ref``. ``cfg.n_boot`` subsamples of size
    ``n * subsample_fraction`` are drawn without replacement; for each grid
    point the subsample Hill statistic is taken at the rescaled order
    statistic ``k * n_sub / n``, and ``k*`` minimises the mean squared
    deviation of those statistics from ``gamma_ref``.
    """
    cfg = cfg or BootstrapConfig()
    x = np.asarray(samples, dtype=float).ravel()
    n = len(x)
    desc = tail_values(x, tail_sign)
    if len(desc) < 2 or not desc[0] > 0:
        raise ValueError(f"no mass on the {tail_sign} tail")
    if n < 1000:
        warnings.warn(f"only {n} samples; the bootstrap choice of k is unreliable", TailWarning, stacklevel=2)

    n_sub = max(int(n * cfg.subsample_fraction), 2)
    k_hi = min(n_sub, len(desc) - 1)
    k_lo = min(cfg.k_min, k_hi)
    ks = np.unique(np.round(np.geomspace(k_lo, k_hi, cfg.grid_points)).astype(np.int64))
    full = _hill_from_sorted(desc, ks)
    if not np.all(np.isfinite(full)):
        raise ValueError("Hill curve is not finite; the tail contains non-positive values")

    i0, i1, gamma_ref, drift = _find_plateau(ks, full, cfg.plateau_window, cfg.plateau_min_k)

    rng = np.random.default_rng(cfg.seed)
    k_sub = np.maximum(np.round(ks * n_sub / n).astype(np.int64), 1)
    sq = np.zeros(len(ks))
    cnt = np.zeros(len(ks))
    for _ in range(cfg.n_boot):
        sub = x[rng.choice(n, n_sub, replace=False)]
        g = hill_curve(sub, k_sub, tail_sign)
        ok = np.isfinite(g)
        sq[ok] += (g[ok] - gamma_ref) ** 2
        cnt[ok] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mse = np.where(cnt > 0, sq / np.maximum(cnt, 1), np.nan)
    if not np.any(np.isfinite(mse)):
        raise ValueError("bootstrap subsamples are too small to reach the tail")
    j = int(np.nanargmin(mse))
    gamma = float(full[j])
    if not gamma > 0:
        raise ValueError("degenerate tail: Hill statistic is zero at the selected k")

    plateau = drift <= cfg.plateau_tol
    return TailEstimate(
        alpha=1.0 / gamma,
        gamma=gamma,
        k=int(ks[j]),
        k_diagnostics=np.column_stack([ks, full, mse]),
        tail_sign=tail_sign,
        n=n,
        plateau=bool(plateau),
        plateau_gamma=gamma_ref,
        plateau_drift=drift,
        plateau_k=(int(ks[i0]), int(ks[i1 - 1])),
    )


@dataclass(frozen=True)
class AcfResult:
    """Sample autocorrelation at ``lags``.

    ``noise_band`` is the i.i.d. band ``1.96 / sqrt(T)``; ``robust_band``
    holds, per lag, ``1.96`` times the standard error of the lag product
    under a sign-symmetric null, which stays valid for heteroscedastic data.
    """

    lags: np.ndarray
    acf: np.ndarray
    noise_band: float
    robust_band: np.ndarray = field(default_factory=lambda: np.empty(0))


def autocorrelation(series, max_lag: int = 100) -> AcfResult:
    """Biased sample autocorrelation for lags ``1..max_lag``."""
    x = np.asarray(getattr(series, "values", series), dtype=float)
    T = len(x)
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag >= T / 4:
        raise ValueError(f"max_lag={max_lag} must be below a quarter of the series length {T}")
    x = x - x.mean()
    c0 = float(x @ x)
    if not c0 > 0:
        raise ValueError("autocorrelation of a constant series")
    lags = np.arange(1, max_lag + 1)
    acf = np.array([x[:-k] @ x[k:] for k in lags]) / c0
    sq = x * x
    robust = 1.96 * np.sqrt(np.array([sq[:-k] @ sq[k:] for k in lags])) / c0
    return AcfResult(lags=lags, acf=acf, noise_band=1.96 / math.sqrt(T), robust_band=robust)


@dataclass(frozen=True)
class MultifractalSpectrum:
    """``moments[i, j] = M_{q_i}(d_j)``; ``zeta`` fitted over ``fit_range``."""

    q_values: np.ndarray
    d_values: np.ndarray
    moments: np.ndarray
    zeta: np.ndarray
    fit_r2: np.ndarray
    zeta_stderr: np.ndarray
    fit_range: tuple[int, int]

    def nonlinearity(self, q_lo: float = 2.0, q_hi: float = 4.0) -> tuple[float, float]:
        """``zeta(q_hi) - (q_hi/q_lo) zeta(q_lo)`` and its standard error.

        Zero for a monofractal, negative for a concave spectrum. The error
        treats the two regressions as independent.
        """
        qs = list(np.asarray(self.q_values, dtype=float))
        i, j = qs.index(q_lo), qs.index(q_hi)
        ratio = q_hi / q_lo
        value = self.zeta[j] - ratio * self.zeta[i]
        err = math.hypot(self.zeta_stderr[j], ratio * self.zeta_stderr[i])
        return float(value), float(err)


def fit_scaling(q_values, d_values, moments, fit_range: tuple[int, int] = (10, 1000)) -> MultifractalSpectrum:
    """Least-squares ``zeta_q`` from a table of moments ``M_q(d)``."""
    q = np.asarray(q_values, dtype=float)
    d = np.asarray(d_values, dtype=np.int64)
    moments = np.asarray(moments, dtype=float)
    if moments.shape != (len(q), len(d)):
        raise ValueError(f"moments shape {moments.shape} does not match ({len(q)}, {len(d)})")
    if not np.all(moments > 0):
        raise ValueError("structure functions must be strictly positive")
    sel = (d >= fit_range[0]) & (d <= fit_range[1])
    if sel.sum() < 3:
        raise ValueError(f"fewer than three d values inside the fit range {fit_range}")
    ld = np.log(d[sel])
    zeta = np.empty(len(q))
    r2 = np.empty(len(q))
    se = np.empty(len(q))
    for i in range(len(q)):
        lm = np.log(moments[i, sel])
        if np.ptp(lm) == 0.0:
            zeta[i], r2[i], se[i] = 0.0, 1.0, 0.0
            continue
        fit = sps.linregress(ld, lm)
        zeta[i], r2[i], se[i] = fit.slope, fit.rvalue ** 2, fit.stderr
    return MultifractalSpectrum(q, d, moments, zeta, r2, se, (int(fit_range[0]), int(fit_range[1])))


def structure_functions(prices, q_values=(1, 2, 3, 4, 5, 6), d_values=None,
                        fit_range: tuple[int, int] = (10, 1000)) -> MultifractalSpectrum:
    """Moments ``M_q(d) = <|ln p_{t+d} - ln p_t|^q>`` and their scaling exponents.

    ``zeta_q`` is the least-squares slope of ``ln M_q(d)`` against ``ln d``
    for ``d`` inside ``fit_range`` (inclusive).
    """
    prices = np.asarray(prices, dtype=float)
    if np.any(prices <= 0):
        raise ValueError("prices must be positive")
    q = np.asarray(q_values, dtype=float)
    if q.size == 0:
        raise ValueError("empty q grid")
    if np.any(q < 0):
        raise ValueError("q must be non-negative")
    if d_values is None:
        d_values = np.unique(np.round(np.geomspace(1, fit_range[1], 31)).astype(np.int64))
    d = np.asarray(d_values, dtype=np.int64)
    if d.size == 0:
        raise ValueError("empty d grid")
    if np.any(d < 1):
        raise ValueError("d must be positive")
    if d.max() > len(prices) / 10:
        raise ValueError(f"max(d)={d.max()} exceeds a tenth of the series length {len(prices)}")

    lp = np.log(prices)
    moments = np.empty((len(q), len(d)))
    for j, dj in enumerate(d):
        inc = np.abs(lp[dj:] - lp[:-dj])
        for i, qi in enumerate(q):
            moments[i, j] = np.mean(inc ** qi)
    if not np.all(moments > 0):
        raise ValueError("zero structure function: the price series has no fluctuations")

    return fit_scaling(q, d, moments, fit_range)


@dataclass(frozen=True)
class LogNormalFit:
    mu_ln: float
    sigma_ln: float
    ks_distance: float
    trim: float = 0.05

    def pdf(self, x):
        return sps.lognorm.pdf(x, s=self.sigma_ln, scale=math.exp(self.mu_ln))


def lognormal_fit(volatility, trim: float = 0.05) -> LogNormalFit:
    """Log-normal fit to the bulk of a positive sample.

    The ``trim`` fraction is dropped on each side of the log-sample. The mean
    and variance of the remaining central part are matched to those of a
    normal truncated at the two cut points, which stays unbiased when the
    log-sample is skewed and the cuts sit asymmetrically about the centre.
    The KS distance is measured on the same central part against the fitted
    law truncated at the cut points.
    """
    x = np.asarray(volatility, dtype=float).ravel()
    if len(x) < 3:
        raise ValueError("need at least three samples")
    if np.any(x <= 0):
        raise ValueError("log-normal fit needs strictly positive samples")
    if not 0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    y = np.log(x)
    lo, hi = np.quantile(y, [trim, 1.0 - trim])
    core = y[(y >= lo) & (y <= hi)]
    m, v = float(core.mean()), float(core.var(ddof=1))
    if v == 0.0:
        raise ValueError("degenerate sample: zero spread in the log-values")
    if trim > 0:
        # start from the symmetric-cut answer, then solve the two moment equations
        z = sps.norm.ppf(1.0 - trim)
        sigma0 = math.sqrt(v / sps.truncnorm.var(-z, z))

        def residual(p):
            mu_, s_ = p[0], math.exp(p[1])
            tm, tv = sps.truncnorm.stats((lo - mu_) / s_, (hi - mu_) / s_, loc=mu_, scale=s_, moments="mv")
            return [(tm - m) / math.sqrt(v), math.log(tv / v)]

        sol = optimize.least_squares(residual, [m, math.log(sigma0)], xtol=1e-14, ftol=1e-14, gtol=1e-14)
        mu, sigma = float(sol.x[0]), float(math.exp(sol.x[1]))
    else:
        mu, sigma = m, math.sqrt(v)

    base = sps.norm(mu, sigma)
    f_lo, f_hi = base.cdf(lo), base.cdf(hi)

    def truncated_cdf(v):
        return np.clip((base.cdf(v) - f_lo) / (f_hi - f_lo), 0.0, 1.0)

    ks = float(sps.kstest(core, truncated_cdf).statistic)
    return LogNormalFit(mu_ln=mu, sigma_ln=sigma, ks_distance=ks, trim=trim)


@dataclass(frozen=True)
class TailRegime:
    """Exponential-vs-power-law comparison on the excesses over ``threshold``."""

    regime: str
    loglik_exponential: float
    loglik_power_law: float
    threshold: float
    n_tail: int

    @property
    def is_power_law(self) -> bool:
        return self.regime == "power_law"


def classify_tail(samples, quantile: float = 0.95) -> TailRegime:
    """Compare maximum-likelihood exponential and Pareto fits above a quantile.

    Both models live on ``x > u`` with ``u`` the ``quantile`` of ``|samples|``:
    shifted exponential ``lam exp(-lam (x - u))`` versus Pareto
    ``a u^a x^-(a+1)``. The larger log-likelihood wins.
    """
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    u = float(np.quantile(x, quantile))
    if not u > 0:
        raise ValueError("tail threshold is zero; the sample has no spread in its tail")
    t = x[x > u]
    m = len(t)
    if m < 10:
        raise ValueError(f"only {m} points beyond the {quantile} quantile")
    excess = t - u
    lam = 1.0 / excess.mean()
    ll_exp = m * math.log(lam) - m
    s = float(np.sum(np.log(t / u)))
    a = m / s
    ll_pl = m * math.log(a) - m * math.log(u) - (a + 1.0) * s
    regime = "exponential" if ll_exp >= ll_pl else "power_law"
    return TailRegime(regime, float(ll_exp), float(ll_pl), u, m)
