import numpy as np
import pytest
from conftest import make_paths, make_rv
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgsde.coefficients import builtin
from mfgsde.ensemble import RandomVariable, hp_norm
from mfgsde.errors import ConfigurationError
from mfgsde.solver import concatenate, solve_frozen, solve_mean_field
from mfgsde.tangent import (
    KINDS,
    TangentSolution,
    dx_concatenated,
    frechet_xi,
    solve_A,
    solve_C,
    solve_D,
    solve_Y_x,
    solve_Y_xi,
)


@pytest.fixture(scope="module")
def setup():
    from conftest import SMOOTH

    paths = make_paths(300, 24, seed=4)
    b = builtin("smooth", SMOOTH)
    xi = make_rv(paths, seed=2)
    fwd = solve_mean_field(b, xi, paths)
    frozen = solve_frozen(b, [0.3], fwd)
    return b, paths, xi, fwd, frozen


def test_kinds_are_validated():
    with pytest.raises(ValueError):
        TangentSolution("E_x", None)
    assert len(KINDS) == 6


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_A_is_linear(setup, a, c):
    b, *_, frozen = setup
    y1, y2 = np.array([0.7]), np.array([-1.1])
    lhs = solve_A(b, frozen, a * y1 + c * y2).values
    rhs = a * solve_A(b, frozen, y1).values + c * solve_A(b, frozen, y2).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


def test_A_starts_at_direction(setup):
    b, *_, frozen = setup
    a = solve_A(b, frozen, [2.5])
    assert np.all(a.values[:, :, 0] == 2.5)


def test_Y_starts_at_zero_and_frechet_is_sum(setup):
    b, paths, xi, fwd, _ = setup
    eta = make_rv(paths, seed=5, mean=0.0, scale=1.0)
    v = frechet_xi(b, fwd, eta)
    dxc, y = v.directions["parts"]
    assert not np.any(y.values[:, :, 0])
    assert np.array_equal(v.values, dxc.values + y.values)
    np.testing.assert_array_equal(v.values[:, :, 0], eta.values)


def test_Y_eta_start_option(setup):
    b, paths, xi, fwd, _ = setup
    eta = make_rv(paths, seed=5, mean=0.0, scale=1.0)
    y = solve_Y_xi(b, fwd, eta, dx_concatenated(b, fwd, xi, eta), start="eta")
    np.testing.assert_array_equal(y.values[:, :, 0], eta.values)


def test_dx_concatenated_equals_A_for_constant_start(setup):
    b, paths, xi, fwd, frozen = setup
    ens = paths.ensemble
    x0 = RandomVariable.constant([0.3], ens.n_scenarios, ens.n_paths)
    conc = concatenate(b, x0, fwd)
    y = RandomVariable.constant([1.2], ens.n_scenarios, ens.n_paths)
    t = dx_concatenated(b, fwd, x0, y, conc)
    np.testing.assert_allclose(t.values, solve_A(b, frozen, [1.2]).values, rtol=0, atol=1e-14)


def test_zero_family_tangents():
    paths = make_paths(50, 8)
    b = builtin("zero")
    xi = make_rv(paths)
    fwd = solve_mean_field(b, xi, paths)
    frozen = solve_frozen(b, [0.0], fwd)
    eta = make_rv(paths, seed=3)
    v = frechet_xi(b, fwd, eta)
    assert np.array_equal(v.values, np.repeat(eta.values[:, :, None], 9, axis=2))
    a = solve_A(b, frozen, [1.0])
    assert np.all(a.values == 1.0)
    c = solve_C(b, frozen, a, a)
    assert not np.any(c.values)


def test_C_is_symmetric(setup):
    b, *_, frozen = setup
    ay, az = solve_A(b, frozen, [0.8]), solve_A(b, frozen, [-0.5])
    c1, c2 = solve_C(b, frozen, ay, az), solve_C(b, frozen, az, ay)
    assert hp_norm(c1.values - c2.values, 2) <= 1e-12


def test_D_sources_agree(setup):
    b, paths, xi, fwd, frozen = setup
    eta = make_rv(paths, seed=6, mean=0.0, scale=1.0)
    v = frechet_xi(b, fwd, eta)
    a, yx = solve_A(b, frozen, [1.0]), solve_Y_x(b, frozen, eta, v)
    d1 = solve_D(b, frozen, a, yx, v, "dxdxi")
    d2 = solve_D(b, frozen, a, yx, v, "dxidx")
    assert np.max(np.abs(d1.values - d2.values)) <= 1e-10
    with pytest.raises(ConfigurationError):
        solve_D(b, frozen, a, yx, v, "both")


def test_consistency_checks(setup):
    b, paths, xi, fwd, frozen = setup
    eta = make_rv(paths, seed=6, mean=0.0, scale=1.0)
    other = make_rv(paths, seed=7, mean=0.0, scale=1.0)
    with pytest.raises(ConfigurationError):
        solve_Y_xi(b, fwd, other, dx_concatenated(b, fwd, xi, eta))
    with pytest.raises(ConfigurationError):
        solve_Y_x(b, frozen, other, frechet_xi(b, fwd, eta))
    frozen2 = solve_frozen(b, [0.1], fwd)
    with pytest.raises(ConfigurationError):
        solve_C(b, frozen2, solve_A(b, frozen, [1.0]), solve_A(b, frozen, [1.0]))
    with pytest.raises(ConfigurationError):
        dx_concatenated(b, fwd, other, eta)
