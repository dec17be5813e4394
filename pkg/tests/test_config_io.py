from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulamfloat.bodies import Ball, Polygon
from ulamfloat.cache import CapCache
from ulamfloat.config import RunConfig, load_config, make_body, make_function, parse_matrix
from ulamfloat.errors import ConfigError
from ulamfloat.functions import PNormFn, QuadraticFn, SmoothMaxAffineFn
from ulamfloat.report import atomic_write_text, write_csv, write_json

keys = st.from_regex(r"[a-z_]{1,8}", fullmatch=True).filter(lambda k: k not in ("family", "body"))
values = st.from_regex(r"[a-z0-9]([a-z0-9.;\- ]{0,10}[a-z0-9])?", fullmatch=True)


@given(st.dictionaries(keys, st.one_of(values, st.lists(values, min_size=2, max_size=4)), max_size=6))
@settings(max_examples=60, deadline=None)
def test_emit_parse_round_trip(entries):
    cfg = RunConfig(dict(entries))
    again = RunConfig.parse(cfg.emit())
    assert again.entries == cfg.entries
    assert again.emit() == cfg.emit()


def test_parse_repeated_keys_and_comments():
    cfg = RunConfig.parse("# header\nfamily = quadratic  # inline\ndelta = 0.1\ndelta = 0.01\n\n")
    assert cfg.get("family") == "quadratic"
    assert cfg.floats("delta") == [0.1, 0.01]


@pytest.mark.parametrize("text", ["family quadratic", " = 3", "family = nosuch", "body = blob"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_geometric_delta_sweep():
    cfg = RunConfig.parse("delta_start = 0.6666666666666666\ndelta_ratio = 4\ndelta_count = 7")
    deltas = cfg.deltas()
    assert len(deltas) == 7
    np.testing.assert_allclose(deltas, [2 / 3 * 4.0**-k for k in range(7)], rtol=1e-15)


def test_bundled_configs_load():
    cfg = load_config("gauss1d.cfg")
    psi = make_function(cfg)
    assert isinstance(psi, QuadraticFn) and psi.dim == 1
    assert len(cfg.deltas()) == 7
    assert isinstance(make_body(load_config("disk.cfg")), Ball)
    assert isinstance(make_body(load_config("square.cfg")), Polygon)
    assert isinstance(make_function(load_config("surrogate.cfg")), SmoothMaxAffineFn)
    assert make_function(load_config("gauss2d.cfg")).dim == 2


def test_missing_config():
    with pytest.raises(ConfigError):
        load_config("does-not-exist.cfg")


def test_parse_matrix():
    np.testing.assert_allclose(parse_matrix("2 0; 0 1"), [[2.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(parse_matrix("3", 2), 3 * np.eye(2))
    with pytest.raises(ConfigError):
        parse_matrix("1 2; 3")


def test_make_function_families():
    cfg = RunConfig.parse("family = pnorm\np = 4\nn = 2")
    assert isinstance(make_function(cfg), PNormFn)


def test_cache_round_trip(tmp_path):
    psi = PNormFn(4.0, 1.0, 2)
    path = tmp_path / "c.csv"
    cache = CapCache(path)
    row = [0.1, 1 / 3, np.pi]
    cache.store(psi, 1e-3, [0.5, -0.25], row)
    cache.store(psi, 1e-3, [0.5, -0.25], [9.0])
    again = CapCache(path)
    assert len(again) == 1
    assert again.lookup(psi, 1e-3, [0.5, -0.25]) == row
    assert again.lookup(psi, 1e-4, [0.5, -0.25]) is None
    assert (again.hits, again.misses) == (1, 1)


def test_atomic_writes(tmp_path):
    target = tmp_path / "sub" / "a.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["a.txt"]


def test_csv_and_json_outputs(tmp_path):
    write_csv(tmp_path / "r.csv", ["delta", "raw", "scaled"], [(0.1, 1 / 3, np.float64(2.0))])
    assert (tmp_path / "r.csv").read_text() == "delta,raw,scaled\n0.1,0.3333333333333333,2.0\n"
    write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": np.arange(2)})
    assert json.loads((tmp_path / "r.json").read_text()) == {"a": [0, 1], "b": 1.5}
