import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgsde.distribution import (
    Lip1Family,
    MinAffine,
    PiecewiseLinear,
    SublinearDistribution,
    check_axioms,
    distributional_derivative,
    lifted_gateaux,
    metric_d,
    representative_independence,
)
from mfgsde.ensemble import RandomVariable, sublinear_expectation
from mfgsde.errors import DifferentiabilityError, DimensionError, NotLipschitzError


def sample(seed, shape=(3, 200, 1), loc=0.0):
    rng = np.random.default_rng(seed)
    return RandomVariable(loc + rng.normal(size=shape) * (1 + np.arange(shape[0]))[:, None, None] / 2)


def second_moment(xi):
    return sublinear_expectation(np.sum(xi.values ** 2, axis=-1))


# --------------------------------------------------------------------------
# metric


def test_self_distance_is_zero():
    F = SublinearDistribution(sample(0))
    assert metric_d(F, F).value == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_shift_distance_1d(c, seed):
    xi = sample(seed, (2, 60, 1))
    res = metric_d(SublinearDistribution(xi), SublinearDistribution(xi + c))
    assert res.value == pytest.approx(abs(c), rel=1e-9)
    assert res.exact_on_ensemble and res.method == "lp"
    assert isinstance(res.certificate, PiecewiseLinear) and res.certificate.lipschitz <= 1 + 1e-12


def test_shift_distance_2d_is_a_lower_bound():
    xi = sample(1, (2, 100, 2))
    res = metric_d(SublinearDistribution(xi), SublinearDistribution(xi + np.array([0.3, 0.4])))
    assert res.method == "dictionary" and not res.exact_on_ensemble
    assert 0.98 * 0.5 <= res.lower_bound <= 0.5 + 1e-12


def test_triangle_chain():
    a, b, c = (SublinearDistribution(sample(s, (2, 80, 1), loc=0.2 * s)) for s in range(3))
    assert metric_d(a, c).value <= metric_d(a, b).value + metric_d(b, c).value + 1e-12


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        metric_d(SublinearDistribution(sample(0)), SublinearDistribution(sample(0, (3, 200, 2))))
    with pytest.raises(ValueError):
        Lip1Family(1, dictionary=[MinAffine([[2.0]], [0.0])])


def test_axioms_hold_on_lip1_pairs():
    rng = np.random.default_rng(3)
    F = SublinearDistribution(sample(4, (3, 100, 2)))

    def member():
        a = rng.normal(size=(3, 2))
        a /= np.maximum(1.0, np.linalg.norm(a, axis=1, keepdims=True))
        return MinAffine(a, rng.normal(size=3))

    pairs = [(member(), member()) for _ in range(50)]
    rep = check_axioms(F, [p for p, _ in pairs], [q for _, q in pairs], tol=1e-12)
    assert rep["all_passed"], rep["worst"]


# --------------------------------------------------------------------------
# lifted derivatives


def test_gateaux_matches_closed_form():
    # no ties: the maximizing scenario is unique, derivative is 2 E_s*[xi] x
    xi = sample(5, loc=0.3)
    s_star = int(np.argmax(np.mean(xi.values[..., 0] ** 2, axis=1)))
    exact = 2 * float(np.mean(xi.values[s_star, :, 0])) * 1.7
    g = lifted_gateaux(second_moment, xi, [1.7])
    assert g.value == pytest.approx(exact, rel=1e-8, abs=1e-10)
    assert g.converged


def test_tie_between_scenarios_is_a_kink():
    xi = RandomVariable(np.array([[[3.0], [-3.0]], [[3.0], [3.0]]]))
    with pytest.raises(DifferentiabilityError) as exc:
        lifted_gateaux(second_moment, xi, [1.0])
    assert "tied" in str(exc.value)


def test_representative_independence():
    xi = sample(6, loc=0.1)
    assert representative_independence(second_moment, xi, "reverse")["passed"]
    assert representative_independence(second_moment, xi, "random", seed=2)["passed"]

    def planted(x):
        return float(np.max(x.values[:, 0, 0] ** 2))

    assert not representative_independence(planted, xi, "reverse")["passed"]


def test_distributional_derivative_closed_form():
    xi = sample(7, loc=0.3)
    eta = sample(8, (3, 200, 1), loc=0.5)
    s_star = int(np.argmax(np.mean(xi.values[..., 0] ** 2, axis=1)))
    m = float(np.mean(xi.values[s_star, :, 0]))
    exact = sublinear_expectation(2 * m * eta.values[..., 0])
    got = distributional_derivative(second_moment, xi, eta, kernel=lambda x: 2 * m * x[0])
    assert got == pytest.approx(exact, rel=1e-12)
    small = RandomVariable(eta.values[:, :20])
    numeric = distributional_derivative(second_moment, xi, small)
    assert numeric == pytest.approx(sublinear_expectation(2 * m * small.values[..., 0]), rel=1e-7)


def test_non_lipschitz_kernel_is_rejected():
    xi = sample(9)
    eta = RandomVariable(np.linspace(-1e-3, 1e-3, 21)[None, :, None])
    with pytest.raises(NotLipschitzError):
        distributional_derivative(second_moment, RandomVariable(xi.values[:1]), eta,
                                  kernel=lambda x: np.sqrt(abs(x[0])))
