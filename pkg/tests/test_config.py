from __future__ import annotations

import pytest
from hypothesis import assume, given, strategies as st

from leaguelab.config import ExperimentConfig, dump_config, from_dict, parse_config
from leaguelab.errors import ConfigError

KEYS = sorted(ExperimentConfig().to_dict())


def test_empty_file_gives_defaults():
    assert parse_config("") == ExperimentConfig()


def test_population_n_minimum():
    with pytest.raises(ConfigError) as exc:
        parse_config("population.N = 1\n")
    assert exc.value.key == "population.N"
    assert "minimum 2" in str(exc.value)


def test_resample_prob_range():
    with pytest.raises(ConfigError) as exc:
        parse_config("[pbt]\nresample_prob = 1.5\n")
    assert exc.value.key == "pbt.resample_prob"
    assert "out of range" in str(exc.value)


def test_type_mismatch_names_key():
    with pytest.raises(ConfigError) as exc:
        parse_config('runtime.workers = "four"\n')
    assert exc.value.key == "runtime.workers"


def test_bool_is_not_an_integer():
    with pytest.raises(ConfigError):
        parse_config("runtime.seed = true\n")


def test_invalid_toml():
    with pytest.raises(ConfigError):
        parse_config("population.N = = 3\n")


def test_rps_needs_odd_k():
    with pytest.raises(ConfigError) as exc:
        parse_config("game.k = 4\n")
    assert exc.value.key == "game.k"


def test_dotted_and_table_forms_agree():
    a = parse_config("qd.beta = 10\nruntime.seed = 3\n")
    b = parse_config("[qd]\nbeta = 10.0\n[runtime]\nseed = 3\n")
    assert a == b and a.qd.beta == 10.0


def test_dump_roundtrip():
    cfg = ExperimentConfig().replace(**{"game.k": 7, "league.fixed_opponent": [0.2, 0.2, 0.2, 0.2, 0.1, 0.05, 0.05]})
    assert parse_config(dump_config(cfg)) == cfg


def test_replace_validates():
    with pytest.raises(ConfigError):
        ExperimentConfig().replace(**{"population.N": 0})


def _perturb(key: str, op: int, pos: int, ch: str) -> str:
    pos %= len(key) + 1
    if op == 0:
        return key[:pos] + ch + key[pos:]
    if op == 1 and len(key) > 1:
        p = min(pos, len(key) - 1)
        return key[:p] + key[p + 1:]
    p = min(pos, len(key) - 1)
    return key[:p] + ch + key[p + 1:]


@given(st.sampled_from(KEYS), st.integers(0, 2), st.integers(0, 40),
       st.sampled_from(list("abcdefghijklmnopqrstuvwxyz_0123456789")))
def test_random_key_perturbation_errors(key, op, pos, ch):
    bad = _perturb(key, op, pos, ch)
    assume(bad not in KEYS)
    flat = ExperimentConfig().to_dict()
    value = flat[key]
    with pytest.raises(ConfigError) as exc:
        from_dict({bad: value})
    assert exc.value.key == bad
