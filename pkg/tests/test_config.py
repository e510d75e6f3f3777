import pytest
from hypothesis import given, settings, strategies as st

from iterpdd.config import (A0_SANITY_CAP, ConfigError, RunConfig, apply, dump, load,
                            parse_text)


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.problem == "manufactured" and cfg.m == 4 and cfg.nodes_per_interface == 6


def test_parse_with_comments():
    d = parse_text("# run\nseed = 7  # master\n\na0=0.1\n")
    assert d == {"seed": "7", "a0": "0.1"}
    with pytest.raises(ConfigError):
        parse_text("seed 7")


def test_typed_conversion():
    cfg = apply(RunConfig(), {"seed": "7", "a0": "0.05", "plain": "yes", "kappa": "none",
                              "domain": "0, 2, 0, 1", "sweep_a1": "0.1 0.2"})
    assert cfg.seed == 7 and cfg.a0 == 0.05 and cfg.plain is True and cfg.kappa is None
    assert cfg.domain == (0.0, 2.0, 0.0, 1.0) and cfg.sweep_a1 == (0.1, 0.2)


@pytest.mark.parametrize("pairs", [{"nope": "1"}, {"seed": "x"}, {"plain": "maybe"}])
def test_bad_keys_and_values(pairs):
    with pytest.raises(ConfigError):
        apply(RunConfig(), pairs)


@pytest.mark.parametrize("pairs", [
    {"a0": "0.1", "eps": "0.1"},
    {"a0": str(A0_SANITY_CAP * 10)},
    {"a0": "-1"},
    {"eps": "0.1"},
    {"m": "0"},
    {"q": "4"},
    {"h_min": "0.1", "h_max": "0.01"},
    {"stop_threshold": "1"},
    {"kappa": "0.5"},
    {"domain": "1 0 0 1"},
    {"problem": "unknown"},
])
def test_validation(pairs):
    with pytest.raises(ConfigError):
        apply(RunConfig(), pairs).validate()


def test_require_tolerance():
    with pytest.raises(ConfigError):
        RunConfig().require_tolerance()


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.cfg")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), a0=st.floats(1e-4, 10), threads=st.integers(1, 8),
       plain=st.booleans(), kappa=st.one_of(st.none(), st.floats(1, 5)))
def test_dump_load_round_trip(tmp_path_factory, seed, a0, threads, plain, kappa):
    cfg = apply(RunConfig(), {"seed": seed, "a0": a0, "threads": threads, "plain": plain,
                              "kappa": kappa, "domain": (0.0, 4.0, 0.0, 1.0)})
    path = tmp_path_factory.mktemp("c") / "run.cfg"
    path.write_text(dump(cfg))
    assert load(path) == cfg
