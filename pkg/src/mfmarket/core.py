"""Mean-field market model: agents, price map and the simulation loop.

Each of ``N`` agents is inactive, buying or selling at every step. The
probability that agent ``i`` trades is ``exp(-mu_i * |log(p_t / p*_t)|)``
where ``p*_t`` is the moving average of the price over the last ``tau``
steps. A trading agent buys or sells with probability 1/2. The net demand
``M_t`` moves the price through ``p_{t+1} = p_t (1 + M_t) / (1 - M_t)``.

RNG contract
------------
Every run owns a ``numpy.random.Generator`` backed by ``PCG64`` seeded with
the 64-bit ``ModelConfig.seed``. Draws are consumed in this fixed order:

1. ``N`` sensitivities (only for :class:`UniformHeterogeneous`), once.
2. Per step, either

   * ``N`` standard-exponential variates, one per agent in index order, for
     the trade decision (``E_i >= mu_i * |log(p/p*)|`` has probability
     ``exp(-mu_i |log(p/p*)|)``), or, under :class:`LogNormalTraders`, a
     single log-normal variate giving the trader count;
   * ``n_t`` uniforms, one per trading agent in index order, for buy/sell;
   * ``n_t`` Poisson variates for the trade sizes, under
     :class:`PoissonVolume` only.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "Homogeneous",
    "UniformHeterogeneous",
    "UnitVolume",
    "PoissonVolume",
    "LogNormalTraders",
    "ModelConfig",
    "MarketState",
    "StepRecord",
    "SimulationSeries",
    "make_rng",
    "sample_sensitivities",
    "trade_probability",
    "fundamental_value",
    "price_factor",
    "initial_state",
    "step",
    "run_simulation",
]

_MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class Homogeneous:
    """Every agent has the same sensitivity ``mu``."""

    mu: float

    def __post_init__(self):
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be a finite non-negative number, got {self.mu!r}")


@dataclass(frozen=True)
class UniformHeterogeneous:
    """Sensitivities drawn i.i.d. uniform on ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo >= 0 and math.isfinite(self.hi)):
            raise ValueError(f"mu_lo must be non-negative, got {self.lo!r}")
        if not self.lo < self.hi:
            raise ValueError(f"mu_lo must be smaller than mu_hi, got [{self.lo!r}, {self.hi!r}]")


MuSpec = Union[Homogeneous, UniformHeterogeneous]


@dataclass(frozen=True)
class UnitVolume:
    """Each trader moves one unit; volume equals the trader count."""


@dataclass(frozen=True)
class PoissonVolume:
    """Each trader moves a Poisson(``lam``) number of units."""

    lam: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"poisson_lambda must be positive, got {self.lam!r}")


VolumeVariant = Union[UnitVolume, PoissonVolume]


@dataclass(frozen=True)
class LogNormalTraders:
    """Impose ``n_t ~ round(LogNormal(mu_ln, sigma_ln))`` clipped to ``[1, N]``.

    Replaces the trade-decision rule; a diagnostic for how much of the return
    tail is inherited from the trader-count distribution.
    """

    mu_ln: float
    sigma_ln: float

    def __post_init__(self):
        if not math.isfinite(self.mu_ln):
            raise ValueError(f"n_override_mu_ln must be finite, got {self.mu_ln!r}")
        if not (self.sigma_ln > 0 and math.isfinite(self.sigma_ln)):
            raise ValueError(f"n_override_sigma_ln must be positive, got {self.sigma_ln!r}")


@dataclass(frozen=True)
class ModelConfig:
    """All parameters of one simulation run."""

    n_agents: int = 10_000
    mu_spec: MuSpec = field(default_factory=lambda: Homogeneous(100.0))
    tau: int = 10_000
    p0: float = 1.0
    t_steps: int = 200_000
    seed: int = 0
    volume_variant: VolumeVariant = field(default_factory=UnitVolume)
    n_override: LogNormalTraders | None = None

    def __post_init__(self):
        if int(self.n_agents) != self.n_agents or self.n_agents < 2:
            raise ValueError(f"n_agents must be an integer >= 2, got {self.n_agents!r}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"tau must be an integer >= 1, got {self.tau!r}")
        if not (self.p0 > 0 and math.isfinite(self.p0)):
            raise ValueError(f"p0 must be positive, got {self.p0!r}")
        if int(self.t_steps) != self.t_steps or self.t_steps < 0:
            raise ValueError(f"t_steps must be a non-negative integer, got {self.t_steps!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed <= _MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.mu_spec, (Homogeneous, UniformHeterogeneous)):
            raise TypeError(f"unsupported mu_spec {self.mu_spec!r}")
        if not isinstance(self.volume_variant, (UnitVolume, PoissonVolume)):
            raise TypeError(f"unsupported volume_variant {self.volume_variant!r}")
        if self.n_override is not None and not isinstance(self.n_override, LogNormalTraders):
            raise TypeError(f"unsupported n_override {self.n_override!r}")


def make_rng(seed: int) -> np.random.Generator:
    """The simulation generator for ``seed`` (PCG64)."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def sample_sensitivities(mu_spec: MuSpec, n_agents: int, rng: np.random.Generator) -> np.ndarray:
    """Per-agent sensitivities ``mu_i``.

    >>> sample_sensitivities(Homogeneous(100.0), 3, make_rng(0))
    array([100., 100., 100.])
    """
    if n_agents < 1:
        raise ValueError("n_agents must be positive")
    if isinstance(mu_spec, Homogeneous):
        return np.full(n_agents, float(mu_spec.mu))
    if isinstance(mu_spec, UniformHeterogeneous):
        return rng.uniform(mu_spec.lo, mu_spec.hi, size=n_agents)
    raise TypeError(f"unsupported mu_spec {mu_spec!r}")


def trade_probability(price, fundamental, mu):
    """Probability that an agent with sensitivity ``mu`` trades.

    ``exp(-mu * |log(price / fundamental)|)``; broadcasts over ``mu``.
    """
    if not (np.all(np.asarray(price) > 0) and np.all(np.asarray(fundamental) > 0)):
        raise ValueError("price and fundamental must be positive")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mu must be non-negative")
    deviation = np.abs(np.log(np.asarray(price, dtype=float) / fundamental))
    prob = np.exp(-mu * deviation)
    return float(prob) if prob.ndim == 0 else prob


def fundamental_value(history: Sequence[float]) -> float:
    """Arithmetic mean of the stored prices (the agents' perceived value)."""
    if len(history) == 0:
        raise ValueError("price history is empty")
    return math.fsum(history) / len(history)


def price_factor(m: float, n_agents: int) -> float:
    """``(1 + m) / (1 - m)`` with ``m`` clamped to ``±(1 - 1/N)``.

    The clamp keeps the price finite and positive when every agent trades on
    the same side.
    """
    lim = 1.0 - 1.0 / n_agents
    if m > lim:
        m = lim
    elif m < -lim:
        m = -lim
    return (1.0 + m) / (1.0 - m)


@dataclass
class MarketState:
    """Mutable state of one run.

    ``history`` holds the last ``min(t + 1, tau)`` prices, including the
    current one. A running sum is kept alongside it and recomputed exactly
    once per ``tau`` appends to bound rounding drift.
    """

    mu: np.ndarray
    price: float
    history: deque
    t: int = 0
    _sum: float = 0.0
    _since_resum: int = 0

    @classmethod
    def create(cls, mu: np.ndarray, p0: float, tau: int) -> "MarketState":
        if p0 <= 0:
            raise ValueError("p0 must be positive")
        history = deque([float(p0)], maxlen=int(tau))
        return cls(mu=np.asarray(mu, dtype=float), price=float(p0), history=history, _sum=float(p0))

    @property
    def n_agents(self) -> int:
        return len(self.mu)

    @property
    def tau(self) -> int:
        return self.history.maxlen

    @property
    def fundamental(self) -> float:
        return self._sum / len(self.history)

    def push_price(self, price: float) -> None:
        if len(self.history) == self.history.maxlen:
            self._sum -= self.history[0]
        self.history.append(price)
        self._sum += price
        self._since_resum += 1
        if self._since_resum >= self.history.maxlen:
            self._sum = math.fsum(self.history)
            self._since_resum = 0
        self.price = price


@dataclass(frozen=True)
class StepRecord:
    price: float
    m: float
    n_traders: int
    volume: int


def initial_state(config: ModelConfig, rng: np.random.Generator) -> MarketState:
    mu = sample_sensitivities(config.mu_spec, config.n_agents, rng)
    return MarketState.create(mu, config.p0, config.tau)


def step(
    state: MarketState,
    rng: np.random.Generator,
    volume_variant: VolumeVariant = UnitVolume(),
    n_override: LogNormalTraders | None = None,
) -> tuple[MarketState, StepRecord]:
    """Advance ``state`` by one step in place and return it with the record.

    Decisions at ``t`` see ``p_t`` and the moving average of prices up to and
    including ``t``. The returned record holds ``p_{t+1}`` together with the
    ``M_t`` and ``n_t`` that produced it.
    """
    n_agents = state.n_agents
    if n_override is None:
        deviation = abs(math.log(state.price / state.fundamental))
        draws = rng.standard_exponential(n_agents)
        if deviation == 0.0:
            n_traders = n_agents
        else:
            n_traders = int(np.count_nonzero(draws >= state.mu * deviation))
    else:
        raw = rng.lognormal(n_override.mu_ln, n_override.sigma_ln)
        n_traders = int(min(max(round(raw), 1), n_agents))

    buyers = int(np.count_nonzero(rng.random(n_traders) < 0.5))
    m = (2 * buyers - n_traders) / n_agents

    if isinstance(volume_variant, PoissonVolume):
        volume = int(rng.poisson(volume_variant.lam, n_traders).sum())
    else:
        volume = n_traders

    new_price = state.price * price_factor(m, n_agents)
    state.push_price(new_price)
    state.t += 1
    return state, StepRecord(price=new_price, m=m, n_traders=n_traders, volume=volume)


@dataclass(frozen=True)
class SimulationSeries:
    """Aligned series of length ``t_steps + 1``; index 0 is the initial state."""

    price: np.ndarray
    m: np.ndarray
    n_traders: np.ndarray
    volume: np.ndarray
    config: ModelConfig
    mu: np.ndarray | None = None

    def __post_init__(self):
        lengths = {len(self.price), len(self.m), len(self.n_traders), len(self.volume)}
        if len(lengths) != 1:
            raise ValueError(f"misaligned series lengths {sorted(lengths)}")

    def __len__(self):
        return len(self.price)

    def moving_average(self) -> np.ndarray:
        """The fundamental ``<p_t>_tau`` seen at every ``t`` (growing window before ``tau``)."""
        tau = self.config.tau
        csum = np.concatenate([[0.0], np.cumsum(self.price)])
        t = np.arange(len(self.price))
        lo = np.maximum(t + 1 - tau, 0)
        return (csum[t + 1] - csum[lo]) / (t + 1 - lo)


def run_simulation(config: ModelConfig) -> SimulationSeries:
    """Run the model for ``config.t_steps`` steps.

    The output is a deterministic function of ``config`` (seed included).
    """
    rng = make_rng(config.seed)
    state = initial_state(config, rng)
    n = config.t_steps + 1
    price = np.empty(n)
    m = np.zeros(n)
    n_traders = np.zeros(n, dtype=np.int64)
    volume = np.zeros(n, dtype=np.int64)
    price[0] = state.price
    for t in range(1, n):
        state, rec = step(state, rng, config.volume_variant, config.n_override)
        price[t] = rec.price
        m[t] = rec.m
        n_traders[t] = rec.n_traders
        volume[t] = rec.volume
    return SimulationSeries(price=price, m=m, n_traders=n_traders, volume=volume,
                            config=config, mu=state.mu.copy())
