import numpy as np
import pytest
from conftest import AFFINE, SMOOTH
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgsde.coefficients import (
    NAMES,
    CallableBundle,
    ProbeSpec,
    builtin,
    interchange_check,
    probe_assumptions,
)
from mfgsde.errors import ConfigurationError

H = 1e-5


def _bundles():
    return [builtin("affine", AFFINE), builtin("smooth", SMOOTH),
            builtin("smooth", {**SMOOTH, "dim_d": 2, "dim_n": 2}),
            builtin("affine", {**AFFINE, "dim_d": 2, "dim_n": 1})]


def _point(rng, b):
    d = b.dim_d
    return (float(rng.uniform(0, 1)), rng.normal(size=d), rng.normal(size=d), rng.normal(size=d),
            rng.normal(size=(2, 16, d)), rng.normal(size=(2, 16, d)))


@pytest.mark.parametrize("bundle", _bundles(), ids=["affine", "smooth", "smooth2", "affine2"])
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_oracles_match_central_differences(bundle, seed):
    rng = np.random.default_rng(seed)
    s, x, y, z, xi, eta = _point(rng, bundle)
    for n in NAMES:
        f = bundle.value
        fd_dx = (f(n, s, x + H * y, xi) - f(n, s, x - H * y, xi)) / (2 * H)
        np.testing.assert_allclose(bundle.dx(n, s, x, xi, y), fd_dx, atol=1e-7)
        fd_dxi = (f(n, s, x, xi + H * eta) - f(n, s, x, xi - H * eta)) / (2 * H)
        np.testing.assert_allclose(bundle.dxi(n, s, x, xi, eta), fd_dxi, atol=1e-7)
        fd_dxx = (bundle.dx(n, s, x + H * z, xi, y) - bundle.dx(n, s, x - H * z, xi, y)) / (2 * H)
        np.testing.assert_allclose(bundle.dxx(n, s, x, xi, y, z), fd_dxx, atol=1e-7)
        fd_dxdxi = (bundle.dxi(n, s, x + H * y, xi, eta) - bundle.dxi(n, s, x - H * y, xi, eta)) / (2 * H)
        np.testing.assert_allclose(bundle.dxdxi(n, s, x, xi, eta, y), fd_dxdxi, atol=1e-7)
        fd_dxidx = (bundle.dx(n, s, x, xi + H * eta, y) - bundle.dx(n, s, x, xi - H * eta, y)) / (2 * H)
        np.testing.assert_allclose(bundle.dxidx(n, s, x, xi, y, eta), fd_dxidx, atol=1e-7)


@pytest.mark.parametrize("bundle", _bundles(), ids=["affine", "smooth", "smooth2", "affine2"])
def test_output_shapes(bundle):
    d, n = bundle.dim_d, bundle.dim_n
    x = np.zeros((3, 5, d))
    xi = np.zeros((3, 5, d))
    assert bundle.value("b", 0.0, x, xi).shape == (3, 5, d)
    assert bundle.value("h", 0.0, x, xi).shape == (3, 5, d, n, n)
    assert bundle.value("g", 0.0, x, xi).shape == (3, 5, d, n)


def test_zero_family_is_zero():
    b = builtin("zero", {"dim_d": 2})
    x = np.ones((4, 2))
    assert not np.any(b.value("g", 0.3, x, np.ones((1, 4, 2))))


def test_unknown_family_and_params_rejected():
    with pytest.raises(ConfigurationError):
        builtin("cubic")
    with pytest.raises(ConfigurationError):
        builtin("affine", {"b": {"A": 1.0}, "colour": 3})
    with pytest.raises(ConfigurationError):
        builtin("smooth", {"b": {"tanh": 1.0, "exp": 2.0}})


def test_missing_oracle_is_a_configuration_error():
    zero = {n: (lambda s, x, xi, n=n: np.zeros(np.shape(x))) for n in NAMES}
    b = CallableBundle(1, 1, value=zero)
    assert not b.provides("dx")
    with pytest.raises(ConfigurationError):
        b.require("dx")
    with pytest.raises(ConfigurationError):
        b.dx("b", 0.0, np.zeros(1), np.zeros((1, 2, 1)), np.ones(1))
    with pytest.raises(ConfigurationError):
        CallableBundle(1, 1, value=zero, dx={"b": zero["b"]})


@pytest.mark.parametrize("family,params", [("zero", None), ("affine", AFFINE), ("smooth", SMOOTH)])
def test_builtins_satisfy_their_declared_constants(family, params):
    rep = probe_assumptions(builtin(family, params), ProbeSpec(count=48, seed=3))
    assert rep.passed, rep.worst


def test_understated_alpha0_is_caught():
    rep = probe_assumptions(builtin("smooth", {**SMOOTH, "alpha0": 0.1}), ProbeSpec(count=32))
    assert not rep.passed
    assert rep.worst[1] > 1.0


@pytest.mark.parametrize("family,params", [("affine", AFFINE), ("smooth", SMOOTH)])
def test_interchange_holds(family, params):
    rep = interchange_check(builtin(family, params), ProbeSpec(count=100, seed=1))
    assert rep["passed"] and rep["max_abs_diff"] <= 1e-9
