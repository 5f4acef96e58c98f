import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from mfgsde.config import config_hash, load_config, normalize, schema, validate
from mfgsde.ensemble import ProcessTensor
from mfgsde.errors import ConfigurationError
from mfgsde.tensorio import MAGIC, fmt, read_csv, read_tensor, write_csv, write_tensor

BASE = {
    "schema_version": 1,
    "seed": 5,
    "ensemble": {"sigma": {"type": "interval", "low": 0.5, "high": 1.0},
                 "grid": {"t_end": 1.0, "steps": 8}, "scenario_count": 2, "path_count": 20},
    "coefficients": {"family": "affine", "params": {"b": {"A": 0.3}}},
    "experiments": [{"type": "solve"}, {"type": "fd_check_x", "name": "fdx"}],
}


# --------------------------------------------------------------------------
# tensor and CSV files


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=4, max_side=5)))
def test_tensor_roundtrip(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("t") / "x.mfgt"
    write_tensor(path, a, {"kind": "A_x"})
    back, header = read_tensor(path)
    assert back.shape == a.shape and header["meta"] == {"kind": "A_x"}
    assert np.array_equal(back, a, equal_nan=True)


def test_tensor_header_layout(tmp_path):
    t = ProcessTensor(np.zeros((2, 3, 4, 1)))
    path = write_tensor(tmp_path / "p.mfgt", t)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    _, header = read_tensor(path)
    assert header["layout"] == "scenario,path,node,dim"
    assert len(raw) == 16 + int.from_bytes(raw[8:16], "little") + 8 * 24


def test_tensor_rejects_foreign_and_truncated(tmp_path):
    bad = tmp_path / "bad.mfgt"
    bad.write_bytes(b"NOTATENS" + bytes(8))
    with pytest.raises(ConfigurationError):
        read_tensor(bad)
    good = write_tensor(tmp_path / "g.mfgt", np.ones(4))
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ConfigurationError):
        read_tensor(good)


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False))
def test_float_format_roundtrips(v):
    assert float(fmt(v)) == v


def test_csv_roundtrip(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "ok", "n"], [(0.1, True, 3), (1e-300, False, -1)])
    head, rows = read_csv(path)
    assert head == ["x", "ok", "n"]
    assert rows == [["0.10000000000000001", "true", "3"], ["1e-300", "false", "-1"]]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", ["x"], [(1, 2)])


# --------------------------------------------------------------------------
# config


def test_base_config_is_valid():
    validate(BASE)
    cfg = normalize(BASE)
    assert cfg["experiments"][0]["name"] == "solve"
    assert cfg["tolerances"]["identity"] == 1e-12


def test_unknown_key_rejected():
    doc = copy.deepcopy(BASE)
    doc["ensemble"]["colour"] = "red"
    with pytest.raises(ConfigurationError, match="colour"):
        validate(doc)


def test_missing_seed_rejected():
    doc = copy.deepcopy(BASE)
    del doc["seed"]
    with pytest.raises(ConfigurationError, match="seed"):
        validate(doc)


def test_duplicate_names_and_bad_params_rejected():
    doc = copy.deepcopy(BASE)
    doc["experiments"].append({"type": "solve"})
    with pytest.raises(ConfigurationError):
        normalize(doc)
    doc = copy.deepcopy(BASE)
    doc["experiments"] = [{"type": "solve", "params": {"epsilons": [0.1]}}]
    with pytest.raises(ConfigurationError):
        validate(doc)


def test_hash_ignores_presentation():
    h = config_hash(normalize(BASE))
    explicit = normalize(BASE)
    assert config_hash(normalize(explicit)) == h
    reordered = dict(reversed(list(copy.deepcopy(BASE).items())))
    assert config_hash(normalize(reordered)) == h
    as_int = copy.deepcopy(BASE)
    as_int["ensemble"]["grid"]["t_end"] = 1
    assert config_hash(normalize(as_int)) == h
    moved = copy.deepcopy(BASE)
    moved["output_dir"] = "elsewhere"
    assert config_hash(normalize(moved)) == h


def test_hash_tracks_semantics():
    h = config_hash(normalize(BASE))
    for change in (("seed", 6), ("experiments", BASE["experiments"][:1])):
        doc = copy.deepcopy(BASE)
        doc[change[0]] = change[1]
        assert config_hash(normalize(doc)) != h


def test_load_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("schema_version: 1\nseed: 5\n")
    with pytest.raises(ConfigurationError):
        load_config(path)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.yaml")


def test_schema_is_closed():
    s = schema()
    assert s["additionalProperties"] is False
    assert "seed" in s["required"]
