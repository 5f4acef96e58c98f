import json

import numpy as np
import pytest
import yaml
from conftest import AFFINE, SMOOTH
from sklearn.base import clone

from mfgsde.cli import main, render_table
from mfgsde.estimator import MeanFieldGSDE
from mfgsde.runner import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_FAIL, EXIT_PASS

ENSEMBLE = {"sigma": {"type": "interval", "low": 0.5, "high": 1.0},
            "grid": {"t_end": 1.0, "steps": 16}, "scenario_count": 2, "path_count": 200}


def write(tmp_path, experiments, coefficients=None, **extra):
    doc = {"schema_version": 1, "seed": 3, "ensemble": ENSEMBLE,
           "coefficients": coefficients or {"family": "smooth", "params": SMOOTH},
           "experiments": experiments, **extra}
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


# --------------------------------------------------------------------------
# CLI


def test_pass_writes_manifest_and_reports(tmp_path, capsys):
    cfg = write(tmp_path, [{"type": "solve"}, {"type": "fd_check_x"}, {"type": "fd_check_xx"},
                           {"type": "fd_check_concatenated"}])
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == EXIT_PASS
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"] == {"total": 4, "passed": 4, "failed": []}
    assert manifest["exit_status"] == 0 and len(manifest["config_hash"]) == 64
    assert (out / "solve" / "summary.csv").read_text().startswith("node,upper_mean,lower_mean,l2_norm\n")
    assert (out / "fd_check_x" / "remainders.csv").read_text().startswith("epsilon,remainder\n")
    capsys.readouterr()
    assert main(["report", str(out), "--plots"]) == 0
    text = capsys.readouterr().out
    for name in ("solve", "fd_check_x", "fd_check_xx", "fd_check_concatenated"):
        assert name in text
    assert sorted(p.name for p in (out / "plots").iterdir()) == [
        "fd_check_concatenated.png", "fd_check_x.png", "fd_check_xx.png"]


def test_failure_exit_code_names_report(tmp_path, capsys):
    cfg = write(tmp_path, [{"type": "probe_assumptions"}],
                {"family": "smooth", "params": {**SMOOTH, "alpha0": 0.1}})
    assert main(["run", str(cfg), "-o", str(tmp_path / "o")]) == EXIT_FAIL
    assert "probe_assumptions/report.json" in capsys.readouterr().err


def test_config_error_writes_nothing(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"schema_version": 1, "ensemble": ENSEMBLE,
                                    "coefficients": {"family": "zero"},
                                    "experiments": [{"type": "solve"}]}))
    out = tmp_path / "never"
    assert main(["run", str(path), "-o", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert "seed" in capsys.readouterr().err


def test_divergence_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, [{"type": "solve"}], {"family": "affine", "params": {"b": {"A": 1000.0}}})
    assert main(["run", str(cfg), "-o", str(tmp_path / "d")]) == EXIT_DIVERGENCE
    assert "step" in capsys.readouterr().out


def test_env_overrides(tmp_path, monkeypatch):
    cfg = write(tmp_path, [{"type": "solve"}, {"type": "concatenation_identity"}],
                output_dir=str(tmp_path / "from-config"))
    monkeypatch.setenv("GSDE_OUTPUT_DIR", str(tmp_path / "from-env"))
    monkeypatch.setenv("GSDE_THREADS", "2")
    assert main(["run", str(cfg)]) == EXIT_PASS
    assert (tmp_path / "from-env" / "manifest.json").exists()
    assert not (tmp_path / "from-config").exists()
    assert main(["run", str(cfg), "-o", str(tmp_path / "flag")]) == EXIT_PASS
    assert (tmp_path / "flag" / "manifest.json").read_bytes() == \
        (tmp_path / "from-env" / "manifest.json").read_bytes()
    monkeypatch.setenv("GSDE_THREADS", "many")
    assert main(["run", str(cfg)]) == EXIT_CONFIG


def test_report_without_manifest(tmp_path):
    assert main(["report", str(tmp_path)]) == EXIT_CONFIG


def test_schema_verb(capsys):
    assert main(["schema"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["additionalProperties"] is False


def test_render_table_rows():
    manifest = {"experiments": [{"name": "a", "type": "solve", "status": "passed",
                                 "summary": {"x": 1.5}},
                                {"name": "bb", "type": "fd_check_x", "status": "failed",
                                 "summary": {"fitted_order": 1.0}}],
                "summary": {"total": 2, "passed": 1, "failed": ["bb"]},
                "config_hash": "0" * 64, "seed": 1}
    lines = render_table(manifest).splitlines()
    assert len(lines) == 5
    assert lines[2].split()[:3] == ["a", "solve", "passed"]
    assert "fitted_order=1" in lines[3]


# --------------------------------------------------------------------------
# estimator facade


def test_estimator_params_roundtrip():
    est = MeanFieldGSDE(family="affine", family_params=AFFINE, steps=8)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(steps=4)
    assert est.steps == 4


def test_estimator_predict_closed_form():
    est = MeanFieldGSDE(family="affine", family_params={"b": {"A": 0.5}}, steps=64, path_count=50,
                        sigma_low=0.5, sigma_high=1.0)
    est.fit(np.random.default_rng(0).normal(size=(50, 1)))
    pred = est.predict([[1.0], [2.0]])
    np.testing.assert_allclose(pred[:, 0], np.array([1.0, 2.0]) * (1 + 0.5 / 64) ** 64, rtol=1e-13)
    assert est.n_features_in_ == 1


def test_estimator_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        MeanFieldGSDE().predict([[0.0]])


def test_estimator_sensitivity_matches_difference():
    est = MeanFieldGSDE(family="smooth", family_params=SMOOTH, steps=16, path_count=200)
    est.fit(np.random.default_rng(1).normal(size=(200, 1)))
    x, h = np.array([0.3]), 1e-5
    fd = (est.predict([x + h]) - est.predict([x - h])) / (2 * h)
    sens = est.sensitivity([x], [1.0])
    np.testing.assert_allclose(sens, fd, rtol=1e-5, atol=1e-8)
