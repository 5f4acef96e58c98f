"""Acceptance suite: one test (or group) per criterion, at the stated tolerances.

The summary lines printed at the end of the run come from the ``criterion``
markers via ``conftest.pytest_terminal_summary``.
"""

import filecmp
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from conftest import AFFINE, SMOOTH, make_paths, make_rv

from mfgsde.cli import main
from mfgsde.coefficients import ProbeSpec, builtin, interchange_check
from mfgsde.distribution import (
    MinAffine,
    SublinearDistribution,
    check_axioms,
    metric_d,
    representative_independence,
)
from mfgsde.ensemble import RandomVariable, hp_norm, lp_norm, sublinear_expectation
from mfgsde.rng import stream
from mfgsde.solver import concatenate, solve_frozen, solve_mean_field
from mfgsde.tangent import (
    dx_concatenated,
    frechet_xi,
    solve_A,
    solve_C,
    solve_D,
    solve_Y_x,
    solve_Y_xi,
)
from mfgsde.verify import (
    BDG_CALIBRATED,
    appendix_check,
    audit_all,
    fd_check_x,
    fd_check_x_xi,
    fd_check_xi,
    fd_check_xi_frozen,
    fd_check_xx,
)

N_PATHS, STEPS = 10_000, 256
ORDER = (1.7, 2.3)


@pytest.fixture(scope="module")
def big_paths():
    return make_paths(N_PATHS, STEPS, seed=11)


@pytest.fixture(scope="module")
def big_xi(big_paths):
    return make_rv(big_paths, seed=12, name="acceptance.xi")


@pytest.fixture(scope="module")
def big_eta(big_paths):
    return make_rv(big_paths, seed=13, mean=0.0, scale=1.0, name="acceptance.eta")


# --------------------------------------------------------------------------


@pytest.mark.criterion(1, "affine closed form on a singleton volatility set (3 SE)")
def test_c01_affine_closed_form():
    beta, gamma, x0 = 0.3, 0.2, 1.0
    bundle = builtin("affine", {"b": {"A": beta}, "g": {"A": gamma}})
    paths = make_paths(100_000, STEPS, scenarios=1, low=1.0, high=1.0, seed=21)
    fwd = solve_mean_field(bundle, RandomVariable.constant([x0], 1, 100_000), paths)
    xt = fwd.x_meanfield.values[0, :, -1, 0]
    se = xt.std(ddof=1) / math.sqrt(xt.size)
    upper = sublinear_expectation(xt[None, :])
    assert abs(upper - x0 * math.exp(beta)) <= 3 * se


@pytest.mark.criterion(2, "quadratic-variation increments and extremes")
def test_c02_qv_invariant():
    lo, hi = 0.5, 1.0
    paths = make_paths(1000, STEPS, scenarios=5, low=lo, high=hi, seed=22)
    delta = paths.ensemble.grid.delta
    inc = np.diff(paths.qv[..., 0, 0], axis=1)
    assert np.all(inc >= lo ** 2 * delta) and np.all(inc <= hi ** 2 * delta)
    qv_t = paths.qv_process(0, 0).terminal.values[..., 0]
    assert abs(sublinear_expectation(qv_t) - hi ** 2) <= 1e-12
    assert abs(-sublinear_expectation(-qv_t) - lo ** 2) <= 1e-12


@pytest.mark.criterion(3, "concatenation identity at the initial law")
@pytest.mark.parametrize("family", ["affine", "smooth"])
def test_c03_concatenation_identity(family, big_paths, big_xi):
    bundle = builtin(family, AFFINE if family == "affine" else SMOOTH)
    fwd = solve_mean_field(bundle, big_xi, big_paths)
    conc = concatenate(bundle, big_xi, fwd)
    assert hp_norm(conc.x_frozen - fwd.x_meanfield, 2) <= 1e-12


def _lin_resid(f, u, v, a=0.7, c=-1.3):
    return hp_norm(f(a * u + c * v).values - a * f(u).values - c * f(v).values, 2)


@pytest.mark.criterion(4, "linearity of A and Y, bilinearity of C and D")
def test_c04_algebraic_structure(big_paths, big_xi, big_eta):
    b = builtin("smooth", SMOOTH)
    fwd = solve_mean_field(b, big_xi, big_paths)
    frozen = solve_frozen(b, [0.3], fwd)
    eta2 = make_rv(big_paths, seed=14, mean=0.5, scale=0.3, name="acceptance.eta2")
    y, y2, z = np.array([1.0]), np.array([-0.4]), np.array([0.6])
    res = {
        "A": _lin_resid(lambda y_: solve_A(b, frozen, y_), y, y2),
        "Y_xi": _lin_resid(lambda e: solve_Y_xi(b, fwd, e, dx_concatenated(b, fwd, big_xi, e)),
                           big_eta, eta2),
        "Y_x": _lin_resid(lambda e: solve_Y_x(b, frozen, e, frechet_xi(b, fwd, e)), big_eta, eta2),
        "C_y": _lin_resid(lambda y_: solve_C(b, frozen, solve_A(b, frozen, y_),
                                             solve_A(b, frozen, z)), y, y2),
        "C_z": _lin_resid(lambda z_: solve_C(b, frozen, solve_A(b, frozen, y),
                                             solve_A(b, frozen, z_)), z, y2),
    }

    def d_solve(y_, e):
        v = frechet_xi(b, fwd, e)
        return solve_D(b, frozen, solve_A(b, frozen, y_), solve_Y_x(b, frozen, e, v), v)

    res["D_y"] = _lin_resid(lambda y_: d_solve(y_, big_eta), y, y2)
    res["D_eta"] = _lin_resid(lambda e: d_solve(y, e), big_eta, eta2)
    assert max(res.values()) <= 1e-12, res


@pytest.mark.criterion(5, "first-order finite-difference convergence")
def test_c05_first_order_smooth(big_paths, big_xi, big_eta):
    b = builtin("smooth", SMOOTH)
    reps = [fd_check_x(b, big_paths, [0.3], big_xi, [1.0], window=ORDER),
            fd_check_xi(b, big_paths, big_xi, big_eta, window=ORDER),
            fd_check_xi_frozen(b, big_paths, [0.3], big_xi, big_eta, window=ORDER)]
    for r in reps:
        assert ORDER[0] <= r.fitted_order <= ORDER[1], r.to_dict()
        assert r.passed, r.to_dict()


@pytest.mark.criterion(5, "first-order finite-difference convergence")
def test_c05_first_order_affine(big_paths, big_xi, big_eta):
    b = builtin("affine", AFFINE)
    reps = [fd_check_x(b, big_paths, [0.3], big_xi, [1.0]),
            fd_check_xi(b, big_paths, big_xi, big_eta),
            fd_check_xi_frozen(b, big_paths, [0.3], big_xi, big_eta)]
    for r in reps:
        assert r.max_remainder <= 1e-12, r.to_dict()


@pytest.mark.criterion(6, "second-order finite-difference convergence")
@pytest.mark.parametrize("sweep", [None, "x", "xi"])
def test_c06_second_order(sweep, big_paths, big_xi, big_eta):
    b = builtin("smooth", SMOOTH)
    if sweep is None:
        r = fd_check_xx(b, big_paths, [0.3], big_xi, [1.0], [-0.7], window=ORDER)
    else:
        r = fd_check_x_xi(b, big_paths, [0.3], big_xi, [1.0], big_eta, sweep=sweep, window=ORDER)
    assert ORDER[0] <= r.fitted_order <= ORDER[1], r.to_dict()
    assert r.passed, r.to_dict()


@pytest.mark.criterion(7, "mixed-derivative interchange")
@pytest.mark.parametrize("family", ["zero", "affine", "smooth"])
def test_c07_interchange_oracles(family):
    params = {"affine": AFFINE, "smooth": SMOOTH}.get(family)
    rep = interchange_check(builtin(family, params), ProbeSpec(count=100, seed=7), 1e-9)
    assert rep["probes"] >= 100 and rep["max_abs_diff"] <= 1e-9


@pytest.mark.criterion(7, "mixed-derivative interchange")
def test_c07_interchange_D(big_paths, big_xi, big_eta):
    b = builtin("smooth", SMOOTH)
    fwd = solve_mean_field(b, big_xi, big_paths)
    frozen = solve_frozen(b, [0.3], fwd)
    v = frechet_xi(b, fwd, big_eta)
    a, yx = solve_A(b, frozen, [1.0]), solve_Y_x(b, frozen, big_eta, v)
    d1 = solve_D(b, frozen, a, yx, v, "dxdxi")
    d2 = solve_D(b, frozen, a, yx, v, "dxidx")
    assert np.max(np.abs(d1.values - d2.values)) <= 1e-10


@pytest.mark.criterion(8, "Grönwall ratio audits, safety factor 4, 10 probes each")
@pytest.mark.parametrize("family", ["zero", "affine", "smooth"])
def test_c08_ratio_audits(family):
    params = {"affine": AFFINE, "smooth": SMOOTH}.get(family)
    paths = make_paths(2000, 64, seed=31)
    audits = audit_all(builtin(family, params), paths)
    assert len({a.lemma_id for a in audits}) == 11
    for a in audits:
        assert len(a.probes) == 10
        assert a.safety_factor == 4
        assert a.passed, a.to_dict()


@pytest.mark.criterion(9, "moment inequalities of simple-process integrals, p in {2, 4}")
@pytest.mark.parametrize("p", [2, 4])
def test_c09_appendix(p, big_paths):
    rep = appendix_check(big_paths, p, probes=10, seed=5)
    assert rep.bdg_constant == BDG_CALIBRATED[p]
    assert len(rep.results) == 30
    assert rep.violations == 0, [r.to_dict() for r in rep.results if not r.holds]


@pytest.mark.criterion(10, "sublinear distributions: metric, axioms, representative independence")
def test_c10_distribution(big_paths):
    xi = make_rv(big_paths, seed=41, mean=0.0, scale=1.0, name="acceptance.dist").values[:, :2000]
    F = SublinearDistribution(xi)
    assert metric_d(F, F).value == 0.0
    for c in (0.3, -1.2):
        assert abs(metric_d(F, SublinearDistribution(xi + c)).value - abs(c)) <= 0.02 * abs(c)
    rng = stream(42, "acceptance.chain")
    for _ in range(10):
        other = xi + rng.uniform(-1, 1) + rng.uniform(0, 1) * rng.standard_normal(xi.shape[1])[None, :, None]
        m = metric_d(F, SublinearDistribution(other)).value
        l1, l2 = lp_norm(other - xi, 1), lp_norm(other - xi, 2)
        assert m <= l1 + 1e-12 and l1 <= l2 + 1e-12
    rng = stream(43, "acceptance.phi")

    def lip1():
        j = int(rng.integers(1, 4))
        a = rng.uniform(-1, 1, (j, 1))
        return MinAffine(a, rng.uniform(-1, 1, j))

    phis, psis = [lip1() for _ in range(100)], [lip1() for _ in range(100)]
    ax = check_axioms(F, phis, psis, seed=44)
    assert ax["pairs"] == 100 and ax["all_passed"], ax

    def respecting(X):
        return sublinear_expectation(np.sin(X.values[..., 0]) + 0.5 * X.values[..., 0])

    def planted(X):
        return float(np.max(X.values[:, 0, 0] ** 2))

    assert representative_independence(respecting, xi)["passed"]
    assert not representative_independence(planted, xi)["passed"]


@pytest.mark.criterion(11, "byte-identical CSVs across two runs of the full suite")
def test_c11_reproducibility(tmp_path):
    cfg = {
        "schema_version": 1, "seed": 2024,
        "ensemble": {"sigma": {"type": "interval", "low": 0.5, "high": 1.0},
                     "grid": {"t_end": 1.0, "steps": 32}, "scenario_count": 3, "path_count": 500},
        "coefficients": {"family": "smooth", "params": SMOOTH},
        "initial": {"mean": 0.2, "scale": 0.5, "point": 0.3},
        "experiments": [
            {"type": "solve"}, {"type": "concatenation_identity"},
            *[{"type": "tangent", "name": f"tangent-{k}", "params": {"kind": k}}
              for k in ("A_x", "Y_xi_xi", "Y_x_xi", "Dxi_X", "C_xx", "D_x_xi")],
            {"type": "fd_check_x"}, {"type": "fd_check_xi"}, {"type": "fd_check_xi_frozen"},
            {"type": "fd_check_xx"}, {"type": "fd_check_x_xi"}, {"type": "fd_check_concatenated"},
            {"type": "ratio_audit", "params": {"lemma": "all"}},
            {"type": "appendix_check"}, {"type": "distribution"},
            {"type": "probe_assumptions"}, {"type": "interchange"},
        ],
    }
    path = tmp_path / "suite.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["run", str(path), "-o", str(tmp_path / "a")]) == 0
    assert main(["run", str(path), "-o", str(tmp_path / "b"), "--jobs", "4"]) == 0
    csvs = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert len(csvs) >= 19
    for rel in csvs:
        assert filecmp.cmp(tmp_path / "a" / rel, tmp_path / "b" / rel, shallow=False), rel
    assert sorted(p.relative_to(tmp_path / "b") for p in Path(tmp_path / "b").rglob("*.csv")) == csvs
