import pytest
from hypothesis import given, strategies as st

from mfmarket.config import ANALYSES, ConfigError, KEYS, load_config, parse_config
from mfmarket.core import Homogeneous, LogNormalTraders, PoissonVolume, UniformHeterogeneous, UnitVolume


def test_minimal_file_defaults(tmp_path):
    path = tmp_path / "min.ini"
    path.write_text("[model]\nn_agents = 1000\n")
    spec = load_config(path)
    assert spec.model.n_agents == 1000
    assert spec.model.tau == 10_000
    assert spec.stats.delta_t == 1
    assert spec.stats.vol_window == 100
    assert spec.model.mu_spec == Homogeneous(100.0)
    assert isinstance(spec.model.volume_variant, UnitVolume)
    assert spec.analyses == frozenset(ANALYSES)
    assert spec.warmup == spec.model.tau


def test_empty_text_is_all_defaults():
    spec = parse_config("")
    assert spec.model.n_agents == 10_000 and spec.realizations == 1


def test_full_file():
    spec = parse_config("""
[model]
n_agents = 2000
mu_lo = 10
mu_hi = 200     # inclusive range
tau = 500
t_steps = 5000
seed = 9
volume = poisson
poisson_lambda = 2.5

[experiment]
realizations = 3
analyses = acf, volatility
warmup_drop = 100
workers = 2

[stats]
delta_t = 4
mf_q = 1, 2, 3
mf_d_min = 5
mf_d_max = 400
bootstrap_b = 25
""")
    m = spec.model
    assert m.mu_spec == UniformHeterogeneous(10.0, 200.0)
    assert m.volume_variant == PoissonVolume(2.5)
    assert (m.n_agents, m.tau, m.t_steps, m.seed) == (2000, 500, 5000, 9)
    assert spec.analyses == {"acf", "volatility"}
    assert (spec.realizations, spec.warmup, spec.workers) == (3, 100, 2)
    assert spec.stats.delta_t == 4
    assert spec.stats.mf_q == (1.0, 2.0, 3.0)
    assert spec.stats.mf_fit_range == (5, 400)
    assert spec.stats.bootstrap.n_boot == 25


def test_lognormal_override():
    spec = parse_config("[model]\nn_override = lognormal\nn_override_mu_ln = 3\nn_override_sigma_ln = 0.5\n")
    assert spec.model.n_override == LogNormalTraders(3.0, 0.5)


@pytest.mark.parametrize("text,field", [
    ("[model]\nmu_lo = 200\nmu_hi = 10\n", "mu_lo"),
    ("[model]\nmu_lo = 50\nmu_hi = 50\n", "mu_lo"),
    ("[model]\nmu_sigma = 3\n", "mu_sigma"),
    ("[model]\nmu = 5\nmu_lo = 1\nmu_hi = 9\n", "mu"),
    ("[model]\nmu = -1\n", "mu"),
    ("[model]\nn_agents = many\n", "n_agents"),
    ("[model]\nn_agents = 1\n", "n_agents"),
    ("[model]\nvolume = gamma\n", "volume"),
    ("[model]\npoisson_lambda = 2\n", "poisson_lambda"),
    ("[model]\nn_override = lognormal\n", "n_override_mu_ln"),
    ("[model]\ntau = 0\n", "tau"),
    ("[market]\nn_agents = 10\n", "market"),
    ("[experiment]\nanalyses = acf, spectra\n", "analyses"),
    ("[experiment]\nrealizations = 0\n", "realizations"),
    ("[model]\nt_steps = 1000\ntau = 1000\n", "warmup_drop"),
    ("[stats]\nmf_d_min = 50\nmf_d_max = 10\n", "mf_d_min"),
    ("[stats]\nregime_quantile = 1.0\n", "regime_quantile"),
    ("not an ini file", "file"),
])
def test_errors_name_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "nope.ini")
    assert info.value.field == "file"


@given(st.sampled_from(sorted(KEYS)), st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
def test_unknown_keys_rejected(section, key):
    if key in KEYS[section] or key.lower() != key:
        return
    with pytest.raises(ConfigError) as info:
        parse_config(f"[{section}]\n{key} = 1\n")
    assert info.value.field == key


@given(st.integers(10, 10**6), st.integers(1, 10**6), st.integers(0, 2**63))
def test_integers_round_trip(n, tau, seed):
    spec = parse_config(f"[model]\nn_agents = {n}\ntau = {tau}\nt_steps = {tau + 1}\nseed = {seed}\n")
    assert (spec.model.n_agents, spec.model.tau, spec.model.seed) == (n, tau, seed)
