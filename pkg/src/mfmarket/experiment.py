"""Ensembles of simulations, their analysis and the files they produce.

Realization ``i`` of an experiment with base seed ``s`` runs with
``derive_seed(s, i)``: the first 64-bit word of
``numpy.random.SeedSequence(s, spawn_key=(i,))``. The first ``warmup``
steps of every realization are dropped before any statistic is computed.
Per-realization exponents are summarised as mean and standard deviation;
CCDFs pool the raw samples of all realizations.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from .analytic import closed_form_density, mixture_density, MixtureParams, predicted_alpha
from .config import ExperimentSpec, StatsConfig
from .core import (
    Homogeneous,
    ModelConfig,
    PoissonVolume,
    SimulationSeries,
    UniformHeterogeneous,
    run_simulation,
)
from .stats import (
    autocorrelation,
    classify_tail,
    fit_scaling,
    lognormal_fit,
    log_returns,
    normalize,
    optimal_k,
    rolling_volatility,
    structure_functions,
    survival,
)

__all__ = [
    "RealizationError",
    "RealizationResult",
    "AggregateResult",
    "derive_seed",
    "realization_configs",
    "analyze_series",
    "run_experiment",
    "FIGURES",
    "figure_spec",
    "reproduce_figure",
    "config_to_dict",
]

log = logging.getLogger(__name__)


class RealizationError(RuntimeError):
    """A realization failed; the message carries its index and seed."""

    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"realization {index} (seed {seed}) failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.seed = seed


def derive_seed(base_seed: int, index: int) -> int:
    """64-bit seed of realization ``index``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def realization_configs(spec: ExperimentSpec) -> list[ModelConfig]:
    return [replace(spec.model, seed=derive_seed(spec.model.seed, i)) for i in range(spec.realizations)]


@dataclass
class RealizationResult:
    """Everything one realization contributes to the aggregate."""

    index: int
    seed: int
    returns: np.ndarray  # normalized returns after warm-up
    volume: np.ndarray
    tails: dict = field(default_factory=dict)
    regime: dict | None = None
    acf_r: np.ndarray | None = None
    acf_abs: np.ndarray | None = None
    acf_robust: np.ndarray | None = None
    noise_band: float | None = None
    volatility: np.ndarray | None = None
    lognormal: dict | None = None
    mf_q: np.ndarray | None = None
    mf_d: np.ndarray | None = None
    mf_moments: np.ndarray | None = None
    mf_monotone: bool | None = None
    prices: np.ndarray | None = None
    p_star: np.ndarray | None = None


def _tail_summary(est) -> dict:
    return {
        "alpha": est.alpha,
        "gamma": est.gamma,
        "k": est.k,
        "n": est.n,
        "plateau": est.plateau,
        "plateau_alpha": 1.0 / est.plateau_gamma,
        "plateau_drift": est.plateau_drift,
        "plateau_k": list(est.plateau_k),
    }


def analyze_series(series: SimulationSeries, spec: ExperimentSpec, index: int = 0) -> RealizationResult:
    """Per-realization statistics; only data after ``spec.warmup`` is used."""
    st: StatsConfig = spec.stats
    w = spec.warmup
    if w >= len(series) - 2:
        raise ValueError(f"warm-up {w} leaves no data in a series of length {len(series)}")
    want = spec.analyses
    prices = series.price[w:]
    volume = series.volume[w + 1:]  # volume[t+1] belongs to the step p_t -> p_{t+1}
    raw = log_returns(prices, st.delta_t)
    r = normalize(raw).values
    res = RealizationResult(index=index, seed=series.config.seed, returns=r, volume=volume)

    if want & {"tail_estimate", "analytic_overlay"}:
        res.tails["volume"] = _tail_summary(optimal_k(volume, "positive", st.bootstrap))
    if "tail_estimate" in want:
        res.tails["returns_positive"] = _tail_summary(optimal_k(r, "positive", st.bootstrap))
        res.tails["returns_negative"] = _tail_summary(optimal_k(r, "negative", st.bootstrap))
        reg = classify_tail(r, st.regime_quantile)
        res.regime = dataclasses.asdict(reg)

    if "acf" in want:
        a = autocorrelation(r, st.acf_max_lag)
        b = autocorrelation(np.abs(r), st.acf_max_lag)
        res.acf_r, res.acf_abs, res.acf_robust, res.noise_band = a.acf, b.acf, a.robust_band, a.noise_band

    if "volatility" in want:
        sigma = rolling_volatility(r, st.vol_window)
        res.volatility = sigma
        fit = lognormal_fit(sigma, st.lognormal_trim)
        res.lognormal = {"mu_ln": fit.mu_ln, "sigma_ln": fit.sigma_ln, "ks_distance": fit.ks_distance}
        if index == 0:
            res.prices = prices
            res.p_star = series.moving_average()[w:]

    if "multifractal" in want:
        lo, hi = st.mf_fit_range
        hi = min(hi, len(prices) // 10)
        d = np.unique(np.round(np.geomspace(1, hi, 31)).astype(np.int64))
        mf = structure_functions(prices, st.mf_q, d, (lo, hi))
        res.mf_q, res.mf_d, res.mf_moments = mf.q_values, mf.d_values, mf.moments
        res.mf_monotone = bool(np.all(np.diff(mf.moments, axis=1) >= 0))
        if not res.mf_monotone:
            log.warning("realization %d: structure functions are not monotone in d", index)
    return res


def _run_one(args) -> RealizationResult:
    index, config, spec = args
    try:
        series = run_simulation(config)
        return analyze_series(series, spec, index)
    except Exception as exc:  # fail fast with the seed attached
        raise RealizationError(index, config.seed, exc) from exc


@dataclass
class AggregateResult:
    """Ensemble summary plus provenance; ``files`` lists what was written."""

    summary: dict
    provenance: dict
    realizations: list[RealizationResult]
    files: list[Path] = field(default_factory=list)

    def exponent(self, name: str) -> dict:
        return self.summary["tail_estimate"][name]


def config_to_dict(config: ModelConfig) -> dict:
    mu = config.mu_spec
    if isinstance(mu, Homogeneous):
        mu_d = {"kind": "homogeneous", "mu": mu.mu}
    elif isinstance(mu, UniformHeterogeneous):
        mu_d = {"kind": "uniform", "lo": mu.lo, "hi": mu.hi}
    vol = config.volume_variant
    vol_d = {"kind": "poisson", "lambda": vol.lam} if isinstance(vol, PoissonVolume) else {"kind": "unit"}
    ov = config.n_override
    ov_d = None if ov is None else {"kind": "lognormal", "mu_ln": ov.mu_ln, "sigma_ln": ov.sigma_ln}
    return {
        "n_agents": config.n_agents,
        "mu": mu_d,
        "tau": config.tau,
        "p0": config.p0,
        "t_steps": config.t_steps,
        "seed": config.seed,
        "volume": vol_d,
        "n_override": ov_d,
    }


def _spec_to_dict(spec: ExperimentSpec) -> dict:
    st = spec.stats
    return {
        "model": config_to_dict(spec.model),
        "realizations": spec.realizations,
        "analyses": sorted(spec.analyses),
        "warmup_drop": spec.warmup,
        "stats": {
            "delta_t": st.delta_t,
            "vol_window": st.vol_window,
            "acf_max_lag": st.acf_max_lag,
            "bootstrap": dataclasses.asdict(st.bootstrap),
            "mf_q": list(st.mf_q),
            "mf_fit_range": list(st.mf_fit_range),
            "lognormal_trim": st.lognormal_trim,
            "regime_quantile": st.regime_quantile,
        },
    }


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else "nan"


def _write_csv(path: Path, header, columns) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])
    return path


def _mean_sd(values) -> dict:
    a = np.asarray(values, dtype=float)
    return {
        "mean": float(a.mean()),
        "sd": float(a.std(ddof=1)) if len(a) > 1 else 0.0,
        "values": a.tolist(),
    }


def _reference_line(x, p, slope, anchor_p=0.1):
    """``c * x**slope`` through the first CCDF point at or below ``anchor_p``."""
    idx = np.nonzero((p <= anchor_p) & (x > 0))[0]
    if len(idx) == 0:
        return np.full(len(x), np.nan)
    j = idx[0]
    with np.errstate(divide="ignore"):
        return p[j] * (x / x[j]) ** slope


def _aggregate(spec: ExperimentSpec, results: list[RealizationResult], out: Path, manifest_extra: dict):
    want = spec.analyses
    files: list[Path] = []
    summary: dict = {}
    st = spec.stats

    if "returns_ccdf" in want:
        r = np.concatenate([res.returns for res in results])
        amax = float(np.max(np.abs(r)))
        x = np.geomspace(1e-2, amax, 400)
        pos = survival(r, x)
        neg = survival(-r, x)
        files.append(_write_csv(out / "returns_ccdf.csv", ["x", "ccdf_pos", "ccdf_neg", "normal_ref"],
                                [x, pos, neg, sps.norm.sf(x)]))
        summary["returns_ccdf"] = {"n_samples": int(len(r)), "max_abs_return": amax}

    if "volume_ccdf" in want:
        v = np.concatenate([res.volume for res in results])
        vals = np.unique(v[v > 0])
        p = (len(v) - np.searchsorted(np.sort(v), vals, side="left")) / len(v)  # P(V >= n)
        ref = _reference_line(vals.astype(float), p, -1.5)
        files.append(_write_csv(out / "volume_ccdf.csv", ["n", "ccdf", "slope_ref"], [vals, p, ref]))
        summary["volume_ccdf"] = {"n_samples": int(len(v)), "reference_slope": -1.5}

    if "tail_estimate" in want or "analytic_overlay" in want:
        names = [n for n in ("returns_positive", "returns_negative", "volume") if n in results[0].tails]
        tails = {}
        for name in names:
            ests = [res.tails[name] for res in results]
            entry = _mean_sd([e["alpha"] for e in ests])
            entry["k"] = [e["k"] for e in ests]
            entry["plateau"] = [e["plateau"] for e in ests]
            entry["realizations"] = len(ests)
            tails[name] = entry
        summary["tail_estimate"] = tails
        if "tail_estimate" in want:
            rows = [(res.index, res.seed, name, res.tails[name]) for res in results for name in names]
            files.append(_write_csv(
                out / "tail_estimates.csv",
                ["realization", "seed", "series", "alpha", "gamma", "k", "n", "plateau", "plateau_alpha",
                 "plateau_drift"],
                list(zip(*[(i, s, name, e["alpha"], e["gamma"], e["k"], e["n"], int(e["plateau"]),
                            e["plateau_alpha"], e["plateau_drift"]) for i, s, name, e in rows])),
            ))
            summary["tail_regime"] = [res.regime for res in results]

    if "acf" in want:
        acf_r = np.mean([res.acf_r for res in results], axis=0)
        acf_abs = np.mean([res.acf_abs for res in results], axis=0)
        band = results[0].noise_band
        lags = np.arange(1, len(acf_r) + 1)
        files.append(_write_csv(out / "acf.csv", ["lag", "acf_r", "acf_abs_r", "noise_band"],
                                [lags, acf_r, acf_abs, np.full(len(lags), band)]))
        summary["acf"] = {
            "noise_band": band,
            "frac_r_in_band": float(np.mean(np.abs(acf_r) < band)),
            "frac_abs_above_band": float(np.mean(acf_abs > band)),
            "robust_band_median": float(np.median(np.mean([res.acf_robust for res in results], axis=0))),
            "realizations": len(results),
        }

    if "volatility" in want:
        first = results[0]
        t0 = spec.warmup
        t = np.arange(t0, t0 + len(first.prices))
        files.append(_write_csv(out / "prices.csv", ["t", "p", "p_star"], [t, first.prices, first.p_star]))
        sig = first.volatility
        tr = np.arange(t0, t0 + len(first.returns))
        sig_full = np.full(len(first.returns), np.nan)
        sig_full[:len(sig)] = sig
        files.append(_write_csv(out / "volatility.csv", ["t", "r", "sigma"], [tr, first.returns, sig_full]))
        pooled = np.concatenate([res.volatility for res in results])
        fit = lognormal_fit(pooled, st.lognormal_trim)
        edges = np.geomspace(pooled.min(), pooled.max(), 61)
        dens, _ = np.histogram(pooled, bins=edges, density=True)
        centers = np.sqrt(edges[:-1] * edges[1:])
        files.append(_write_csv(out / "volatility_pdf.csv", ["sigma", "pdf", "lognormal"],
                                [centers, dens, fit.pdf(centers)]))
        summary["volatility"] = {
            "window": st.vol_window,
            "lognormal_pooled": {"mu_ln": fit.mu_ln, "sigma_ln": fit.sigma_ln, "ks_distance": fit.ks_distance},
            "lognormal_per_realization": [res.lognormal for res in results],
        }

    if "multifractal" in want:
        moments = np.mean([res.mf_moments for res in results], axis=0)
        q, d = results[0].mf_q, results[0].mf_d
        hi = min(st.mf_fit_range[1], int(d.max()))
        spec_mf = fit_scaling(q, d, moments, (st.mf_fit_range[0], hi))
        qq, dd = np.meshgrid(q, d, indexing="ij")
        files.append(_write_csv(out / "multifractal.csv", ["q", "d", "m_qd"],
                                [qq.ravel(), dd.ravel(), moments.ravel()]))
        files.append(_write_csv(out / "zeta.csv", ["q", "zeta_q", "r2"], [q, spec_mf.zeta, spec_mf.fit_r2]))
        mf_summary = {
            "zeta": spec_mf.zeta.tolist(),
            "zeta_stderr": spec_mf.zeta_stderr.tolist(),
            "fit_range": list(spec_mf.fit_range),
            "monotone_in_d": [res.mf_monotone for res in results],
        }
        if 2.0 in q and 4.0 in q:
            value, err = spec_mf.nonlinearity(2.0, 4.0)
            mf_summary["zeta4_minus_2zeta2"] = value
            mf_summary["zeta4_minus_2zeta2_stderr"] = err
        summary["multifractal"] = mf_summary

    if "analytic_overlay" in want:
        zeta_v = summary["tail_estimate"]["volume"]["mean"]
        r = np.linspace(0.0, 30.0, 301)
        closed = closed_form_density(r, zeta_v)
        mixture = mixture_density(r, MixtureParams(zeta_v, spec.model.n_agents))
        files.append(_write_csv(out / "analytic_overlay.csv", ["r", "closed_form", "mixture"], [r, closed, mixture]))
        entry = {"zeta_v": zeta_v, "predicted_alpha": predicted_alpha(zeta_v)}
        if "returns_positive" in summary["tail_estimate"]:
            entry["measured_alpha_positive"] = summary["tail_estimate"]["returns_positive"]["mean"]
            entry["measured_alpha_negative"] = summary["tail_estimate"]["returns_negative"]["mean"]
        summary["analytic_overlay"] = entry

    config_dict = _spec_to_dict(spec)
    config_hash = hashlib.sha256(json.dumps(config_dict, sort_keys=True).encode()).hexdigest()
    provenance = {
        "artifact": "mfmarket",
        "version": __version__,
        "config_hash": config_hash,
        "base_seed": spec.model.seed,
        "seeds": [res.seed for res in results],
        "seed_derivation": "SeedSequence(base_seed, spawn_key=(index,)).generate_state(1, uint64)[0]",
    }
    manifest = {"config": config_dict, "provenance": provenance, "summary": summary}
    manifest.update(manifest_extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")
    files.append(path)
    return summary, provenance, files


def run_experiment(spec: ExperimentSpec, output_dir=None, workers: int | None = None,
                   manifest_extra: dict | None = None) -> AggregateResult:
    """Run every realization, aggregate, and write the output files.

    Realizations may run in worker processes; the merge always happens in
    realization order so the output bytes do not depend on ``workers``.
    """
    out = Path(output_dir if output_dir is not None else spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = spec.workers if workers is None else workers
    jobs = [(i, cfg, spec) for i, cfg in enumerate(realization_configs(spec))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = []
        for job in jobs:
            log.info("realization %d/%d (seed %d)", job[0] + 1, len(jobs), job[1].seed)
            results.append(_run_one(job))
    summary, provenance, files = _aggregate(spec, results, out, manifest_extra or {})
    return AggregateResult(summary=summary, provenance=provenance, realizations=results, files=files)


# Canonical parameters for each figure; the ensemble figures average 10 realizations.
_FIG_HOMOGENEOUS = ModelConfig(n_agents=20_000, mu_spec=Homogeneous(100.0), tau=10_000, t_steps=200_000, seed=2)
_FIG_HETEROGENEOUS = ModelConfig(n_agents=10_000, mu_spec=UniformHeterogeneous(10.0, 200.0), tau=10_000,
                                 t_steps=200_000, seed=1)

FIGURES = {
    "fig1": {
        "model": _FIG_HOMOGENEOUS,
        "realizations": 1,
        "analyses": frozenset({"volatility"}),
        "sidecar": {
            "title": "Time evolution",
            "panels": {
                "a": {"file": "prices.csv", "x": "t", "y": ["p", "p_star"]},
                "b": {"file": "volatility.csv", "x": "t", "y": "r", "label": "normalized return"},
                "c": {"file": "volatility.csv", "x": "t", "y": "sigma", "label": "volatility, window 100"},
            },
        },
    },
    "fig2a": {
        "model": _FIG_HETEROGENEOUS,
        "realizations": 10,
        "analyses": frozenset({"returns_ccdf", "tail_estimate"}),
        "sidecar": {
            "title": "Cumulative distribution of normalized returns",
            "file": "returns_ccdf.csv",
            "x": "x", "y": ["ccdf_pos", "ccdf_neg", "normal_ref"],
            "scale": "log-log", "reference_slope": -3.0,
        },
    },
    "fig2b": {
        "model": _FIG_HETEROGENEOUS,
        "realizations": 10,
        "analyses": frozenset({"volume_ccdf", "tail_estimate"}),
        "sidecar": {
            "title": "Cumulative distribution of the number of traders",
            "file": "volume_ccdf.csv",
            "x": "n", "y": ["ccdf", "slope_ref"],
            "scale": "log-log", "reference_slope": -1.5,
        },
    },
    "fig3a": {
        "model": _FIG_HOMOGENEOUS,
        "realizations": 1,
        "analyses": frozenset({"acf", "volatility"}),
        "sidecar": {
            "title": "Autocorrelation of returns and absolute returns",
            "file": "acf.csv", "x": "lag", "y": ["acf_r", "acf_abs_r", "noise_band"],
            "inset": {"file": "volatility_pdf.csv", "x": "sigma", "y": ["pdf", "lognormal"]},
        },
    },
    "fig3b": {
        "model": _FIG_HOMOGENEOUS,
        "realizations": 1,
        "analyses": frozenset({"multifractal"}),
        "sidecar": {
            "title": "Structure functions",
            "file": "multifractal.csv", "x": "d", "y": "m_qd", "group": "q", "scale": "log-log",
            "inset": {"file": "zeta.csv", "x": "q", "y": "zeta_q"},
        },
    },
}


def figure_spec(name: str, seed: int | None = None, realizations: int | None = None,
                workers: int = 1, model: ModelConfig | None = None) -> ExperimentSpec:
    """Canonical :class:`ExperimentSpec` for a figure, with optional overrides."""
    if name not in FIGURES:
        raise KeyError(f"unknown figure {name!r}; choose from {sorted(FIGURES)}")
    fig = FIGURES[name]
    cfg = model or fig["model"]
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return ExperimentSpec(
        model=cfg,
        realizations=realizations or fig["realizations"],
        analyses=fig["analyses"],
        output_dir=Path(name),
        workers=workers,
    )


def reproduce_figure(name: str, output_dir, seed: int | None = None, realizations: int | None = None,
                     workers: int = 1, model: ModelConfig | None = None) -> AggregateResult:
    """Run the canonical experiment for ``name`` and write plot-ready CSVs plus ``<name>.json``."""
    spec = figure_spec(name, seed, realizations, workers, model)
    out = Path(output_dir)
    result = run_experiment(spec, out, manifest_extra={"figure": name})
    sidecar = dict(FIGURES[name]["sidecar"], figure=name, realizations=spec.realizations,
                   model=config_to_dict(spec.model))
    path = out / f"{name}.json"
    path.write_text(json.dumps(_clean(sidecar), indent=2, sort_keys=True) + "\n")
    result.files.append(path)
    return result
