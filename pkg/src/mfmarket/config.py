"""Experiment configuration: an INI file with ``[model]``, ``[experiment]`` and ``[stats]``.

Every key is optional; unknown sections and keys are errors. Example::

    [model]
    n_agents = 10000
    mu_lo = 10
    mu_hi = 200
    t_steps = 200000
    seed = 7

    [experiment]
    realizations = 10
    analyses = returns_ccdf, volume_ccdf, tail_estimate

See ``KEYS`` for the full list and ``README.md`` for defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    Homogeneous,
    LogNormalTraders,
    ModelConfig,
    PoissonVolume,
    UniformHeterogeneous,
    UnitVolume,
)
from .stats import BootstrapConfig

__all__ = ["ConfigError", "ANALYSES", "KEYS", "StatsConfig", "ExperimentSpec", "load_config", "parse_config"]

ANALYSES = (
    "returns_ccdf",
    "volume_ccdf",
    "tail_estimate",
    "acf",
    "volatility",
    "multifractal",
    "analytic_overlay",
)

KEYS = {
    "model": ("n_agents", "mu", "mu_lo", "mu_hi", "tau", "p0", "t_steps", "seed",
              "volume", "poisson_lambda", "n_override", "n_override_mu_ln", "n_override_sigma_ln"),
    "experiment": ("realizations", "analyses", "output_dir", "warmup_drop", "workers"),
    "stats": ("delta_t", "vol_window", "acf_max_lag", "bootstrap_b", "bootstrap_fraction",
              "k_grid_points", "k_min", "bootstrap_seed", "mf_q", "mf_d_min", "mf_d_max",
              "lognormal_trim", "regime_quantile"),
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class StatsConfig:
    delta_t: int = 1
    vol_window: int = 100
    acf_max_lag: int = 100
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    mf_q: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    mf_fit_range: tuple[int, int] = (10, 1000)
    lognormal_trim: float = 0.05
    regime_quantile: float = 0.95


@dataclass(frozen=True)
class ExperimentSpec:
    model: ModelConfig = field(default_factory=ModelConfig)
    realizations: int = 1
    analyses: frozenset = frozenset(ANALYSES)
    output_dir: Path = Path("mfm_output")
    warmup_drop: int | None = None
    workers: int = 1
    stats: StatsConfig = field(default_factory=StatsConfig)

    def __post_init__(self):
        if self.realizations < 1:
            raise ConfigError("realizations", "must be >= 1")
        if not self.analyses:
            raise ConfigError("analyses", "must name at least one analysis")
        unknown = set(self.analyses) - set(ANALYSES)
        if unknown:
            raise ConfigError("analyses", f"unknown analyses {sorted(unknown)}")
        if self.warmup_drop is not None and self.warmup_drop < 0:
            raise ConfigError("warmup_drop", "must be >= 0")
        if self.warmup >= self.model.t_steps:
            raise ConfigError("warmup_drop", f"warm-up of {self.warmup} steps leaves no data out of "
                                             f"t_steps={self.model.t_steps}")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")

    @property
    def warmup(self) -> int:
        return self.model.tau if self.warmup_drop is None else self.warmup_drop


def _get(section, key, conv, default):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None


def _int(raw: str) -> int:
    value = float(raw)  # accepts 1e4
    if not value.is_integer():
        raise ValueError("not an integer")
    return int(value)


def _float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _list(conv):
    def parse(raw: str):
        return tuple(conv(item) for item in raw.replace(",", " ").split())
    return parse


def _wrap(fn, key_hint: str):
    """Re-raise model validation errors as ConfigError naming the field."""
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        field_name = msg.split(" ", 1)[0] if msg.split(" ", 1)[0] in sum(KEYS.values(), ()) else key_hint
        raise ConfigError(field_name, msg) from None


def _model(sec) -> ModelConfig:
    defaults = ModelConfig()
    has_mu = "mu" in sec
    has_range = "mu_lo" in sec or "mu_hi" in sec
    if has_mu and has_range:
        raise ConfigError("mu", "give either mu or mu_lo/mu_hi, not both")
    if has_range:
        if not ("mu_lo" in sec and "mu_hi" in sec):
            raise ConfigError("mu_lo" if "mu_lo" not in sec else "mu_hi", "mu_lo and mu_hi must be given together")
        lo = _get(sec, "mu_lo", _float, None)
        hi = _get(sec, "mu_hi", _float, None)
        if lo < 0:
            raise ConfigError("mu_lo", f"must be non-negative, got {lo}")
        if not lo < hi:
            raise ConfigError("mu_lo", f"must be smaller than mu_hi ({lo} >= {hi})")
        mu_spec = UniformHeterogeneous(lo, hi)
    elif has_mu:
        mu = _get(sec, "mu", _float, None)
        if mu < 0:
            raise ConfigError("mu", f"must be non-negative, got {mu}")
        mu_spec = Homogeneous(mu)
    else:
        mu_spec = defaults.mu_spec

    volume = _get(sec, "volume", str.lower, "unit")
    if volume == "unit":
        if "poisson_lambda" in sec:
            raise ConfigError("poisson_lambda", "only valid with volume = poisson")
        volume_variant = UnitVolume()
    elif volume == "poisson":
        lam = _get(sec, "poisson_lambda", _float, 1.0)
        volume_variant = _wrap(lambda: PoissonVolume(lam), "poisson_lambda")
    else:
        raise ConfigError("volume", f"expected 'unit' or 'poisson', got {volume!r}")

    override = _get(sec, "n_override", str.lower, "none")
    if override == "none":
        extra = [k for k in ("n_override_mu_ln", "n_override_sigma_ln") if k in sec]
        if extra:
            raise ConfigError(extra[0], "only valid with n_override = lognormal")
        n_override = None
    elif override == "lognormal":
        for k in ("n_override_mu_ln", "n_override_sigma_ln"):
            if k not in sec:
                raise ConfigError(k, "required with n_override = lognormal")
        mu_ln = _get(sec, "n_override_mu_ln", _float, None)
        sigma_ln = _get(sec, "n_override_sigma_ln", _float, None)
        n_override = _wrap(lambda: LogNormalTraders(mu_ln, sigma_ln), "n_override_sigma_ln")
    else:
        raise ConfigError("n_override", f"expected 'none' or 'lognormal', got {override!r}")

    kwargs = dict(
        n_agents=_get(sec, "n_agents", _int, defaults.n_agents),
        mu_spec=mu_spec,
        tau=_get(sec, "tau", _int, defaults.tau),
        p0=_get(sec, "p0", _float, defaults.p0),
        t_steps=_get(sec, "t_steps", _int, defaults.t_steps),
        seed=_get(sec, "seed", _int, defaults.seed),
        volume_variant=volume_variant,
        n_override=n_override,
    )
    return _wrap(lambda: ModelConfig(**kwargs), "model")


def _stats(sec) -> StatsConfig:
    d = StatsConfig()
    b = d.bootstrap
    boot = _wrap(lambda: BootstrapConfig(
        n_boot=_get(sec, "bootstrap_b", _int, b.n_boot),
        subsample_fraction=_get(sec, "bootstrap_fraction", _float, b.subsample_fraction),
        grid_points=_get(sec, "k_grid_points", _int, b.grid_points),
        k_min=_get(sec, "k_min", _int, b.k_min),
        seed=_get(sec, "bootstrap_seed", _int, b.seed),
    ), "bootstrap")
    cfg = StatsConfig(
        delta_t=_get(sec, "delta_t", _int, d.delta_t),
        vol_window=_get(sec, "vol_window", _int, d.vol_window),
        acf_max_lag=_get(sec, "acf_max_lag", _int, d.acf_max_lag),
        bootstrap=boot,
        mf_q=_get(sec, "mf_q", _list(_float), d.mf_q),
        mf_fit_range=(_get(sec, "mf_d_min", _int, d.mf_fit_range[0]),
                      _get(sec, "mf_d_max", _int, d.mf_fit_range[1])),
        lognormal_trim=_get(sec, "lognormal_trim", _float, d.lognormal_trim),
        regime_quantile=_get(sec, "regime_quantile", _float, d.regime_quantile),
    )
    if cfg.delta_t < 1:
        raise ConfigError("delta_t", "must be >= 1")
    if cfg.vol_window < 2:
        raise ConfigError("vol_window", "must be >= 2")
    if cfg.acf_max_lag < 1:
        raise ConfigError("acf_max_lag", "must be >= 1")
    if not cfg.mf_q or any(q < 0 for q in cfg.mf_q):
        raise ConfigError("mf_q", "must be a non-empty list of non-negative numbers")
    lo, hi = cfg.mf_fit_range
    if not 1 <= lo < hi:
        raise ConfigError("mf_d_min", f"need 1 <= mf_d_min < mf_d_max, got {lo}, {hi}")
    if not 0 <= cfg.lognormal_trim < 0.5:
        raise ConfigError("lognormal_trim", "must lie in [0, 0.5)")
    if not 0 < cfg.regime_quantile < 1:
        raise ConfigError("regime_quantile", "must lie in (0, 1)")
    return cfg


def parse_config(text: str) -> ExperimentSpec:
    """Parse configuration text into a validated :class:`ExperimentSpec`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", f"parse error: {exc}") from None
    for name in parser.sections():
        if name not in KEYS:
            raise ConfigError(name, f"unknown section [{name}]; expected one of {sorted(KEYS)}")
        for key in parser[name]:
            if key not in KEYS[name]:
                raise ConfigError(key, f"unknown key in [{name}]")

    empty = {}
    model = _model(parser["model"] if parser.has_section("model") else empty)
    stats = _stats(parser["stats"] if parser.has_section("stats") else empty)
    exp = parser["experiment"] if parser.has_section("experiment") else empty
    analyses = _get(exp, "analyses", _list(str), ANALYSES)
    return ExperimentSpec(
        model=model,
        realizations=_get(exp, "realizations", _int, 1),
        analyses=frozenset(analyses),
        output_dir=Path(_get(exp, "output_dir", str, "mfm_output")),
        warmup_drop=_get(exp, "warmup_drop", _int, None),
        workers=_get(exp, "workers", _int, 1),
        stats=stats,
    )


def load_config(path) -> ExperimentSpec:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
