"""scikit-learn style facade over the functional solvers.

Usage::

    est = MeanFieldGSDE(family="affine", family_params={"b": {"A": 0.3}}, path_count=2000)
    est.fit(x0_samples)             # (N, d) samples of the initial law
    est.predict([[0.0], [1.0]])     # upper mean of X_T from fixed start points
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .coefficients import builtin
from .ensemble import (
    RandomVariable,
    ScenarioEnsemble,
    SigmaSet,
    TimeGrid,
    scenario_means,
)
from .gbrownian import GBrownianPaths
from .solver import node_summary, solve_frozen, solve_mean_field
from .tangent import solve_A

__all__ = ["MeanFieldGSDE"]


class MeanFieldGSDE(BaseEstimator):
    """Mean-field G-SDE on an interval volatility set.

    Parameters
    ----------
    family : str
        Built-in coefficient family: ``"zero"``, ``"affine"`` or ``"smooth"``.
    family_params : dict or None
        Parameters passed to the family. ``dim_d`` defaults to the width of
        the data given to :meth:`fit`.
    sigma_low, sigma_high : float
        Volatility bounds of the one-dimensional driver.
    horizon : float
        Terminal time; the grid starts at 0.
    steps : int
        Number of Euler steps.
    scenario_count : int
        Number of volatility controls.
    path_count : int or None
        Number of Wiener paths. ``None`` uses one path per sample.
    seed : int
        Seed of the Wiener stream.
    statistic : {"upper", "lower"}
        ``predict`` reports ``E[X_T]`` or ``-E[-X_T]`` componentwise.
    """

    def __init__(self, family="smooth", family_params=None, sigma_low=0.5, sigma_high=1.0,
                 horizon=1.0, steps=64, scenario_count=3, path_count=None, seed=0,
                 statistic="upper"):
        self.family = family
        self.family_params = family_params
        self.sigma_low = sigma_low
        self.sigma_high = sigma_high
        self.horizon = horizon
        self.steps = steps
        self.scenario_count = scenario_count
        self.path_count = path_count
        self.seed = seed
        self.statistic = statistic

    def fit(self, X, y=None):
        """Solve the mean-field equation with initial law given by the rows of ``X``.

        With ``path_count`` larger than the sample count the samples are
        reused cyclically; with a smaller one only the first rows are used.
        """
        X = check_array(X, dtype=np.float64)
        if self.statistic not in ("upper", "lower"):
            raise ValueError(f"statistic must be 'upper' or 'lower', got {self.statistic!r}")
        params = dict(self.family_params or {})
        params.setdefault("dim_d", X.shape[1])
        self.bundle_ = builtin(self.family, params)
        if self.bundle_.dim_d != X.shape[1]:
            raise ValueError(f"X has {X.shape[1]} columns, family has dim_d = {self.bundle_.dim_d}")
        n_paths = X.shape[0] if self.path_count is None else int(self.path_count)
        ens = ScenarioEnsemble.generate(SigmaSet.interval(self.sigma_low, self.sigma_high),
                                        TimeGrid(0.0, float(self.horizon), int(self.steps)),
                                        int(self.scenario_count), n_paths, int(self.seed))
        self.paths_ = GBrownianPaths(ens)
        xi = X[np.arange(n_paths) % X.shape[0]]
        self.forward_ = solve_mean_field(self.bundle_, RandomVariable.from_paths(xi, ens.n_scenarios),
                                         self.paths_)
        self.summary_ = node_summary(self.forward_.x_meanfield)
        self.n_features_in_ = X.shape[1]
        return self

    def _stat(self, values: np.ndarray) -> np.ndarray:
        sign = 1.0 if self.statistic == "upper" else -1.0
        return np.array([sign * np.max(scenario_means(sign * values[..., j]))
                         for j in range(values.shape[-1])])

    def _argstat(self, values: np.ndarray) -> int:
        means = scenario_means(values)
        return int(np.argmax(means) if self.statistic == "upper" else np.argmin(means))

    def predict(self, X):
        """Componentwise upper (or lower) mean of ``X_T`` started at each row of ``X``."""
        check_is_fitted(self, "forward_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        out = np.empty_like(X)
        for i, x in enumerate(X):
            sol = solve_frozen(self.bundle_, x, self.forward_)
            out[i] = self._stat(sol.x_frozen.values[:, :, -1])
        return out

    def sensitivity(self, X, direction):
        """Directional derivative of :meth:`predict` at each row.

        Per component, the mean of the terminal x-derivative in the scenario
        attaining the upper (or lower) mean of ``X_T``; at a tie between
        scenarios the lowest index is used and the value is a one-sided slope.
        """
        check_is_fitted(self, "forward_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        direction = np.asarray(direction, dtype=np.float64).reshape(-1)
        out = np.empty_like(X)
        for i, x in enumerate(X):
            frozen = solve_frozen(self.bundle_, x, self.forward_)
            a_t = solve_A(self.bundle_, frozen, direction).values[:, :, -1]
            x_t = frozen.x_frozen.values[:, :, -1]
            for j in range(x_t.shape[-1]):
                s = self._argstat(x_t[..., j])
                out[i, j] = float(scenario_means(a_t[..., j])[s])
        return out

    def _check_width(self, X) -> None:
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, fitted with {self.n_features_in_}")
