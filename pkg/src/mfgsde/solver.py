"""Explicit Euler solvers for the mean-field equation and its frozen-law companion.

One step reads

    X_{k+1} = X_k + b δ + Σ_ij h_ij Δ⟨B^i, B^j⟩_k + Σ_i g_i ΔB^i_k,

with every coefficient evaluated at ``(t_k, X_k, Ξ_k)``. For the mean-field
solve ``Ξ_k`` is the node-``k`` slice of the solution itself; the frozen and
concatenated solves read it from a finished forward solution instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .coefficients import CoefficientBundle
from .ensemble import ProcessTensor, RandomVariable, _values, lp_norm, scenario_means
from .errors import ConfigurationError, DimensionError, DivergenceError
from .gbrownian import GBrownianPaths

__all__ = [
    "DIVERGENCE_BOUND",
    "ForwardSolution",
    "FrozenSolution",
    "solve_mean_field",
    "solve_frozen",
    "concatenate",
    "node_summary",
]


DIVERGENCE_BOUND = 1e12


def qv_term(h: np.ndarray, dqv: np.ndarray) -> np.ndarray:
    """``Σ_ij h[..., i, j] dqv[s, i, j]`` for ``h`` of shape ``(S, N, d, n, n)``."""
    n = dqv.shape[-1]
    out = None
    for i in range(n):
        for j in range(n):
            t = h[..., i, j] * dqv[:, None, None, i, j]
            out = t if out is None else out + t
    return out


def noise_term(g: np.ndarray, db: np.ndarray) -> np.ndarray:
    """``Σ_i g[..., i] db[s, p, i]`` for ``g`` of shape ``(S, N, d, n)``."""
    out = g[..., 0] * db[:, :, None, 0]
    for i in range(1, db.shape[-1]):
        out = out + g[..., i] * db[:, :, None, i]
    return out


def check_state(state: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(state) | (np.abs(state) > DIVERGENCE_BOUND)
    if bad.any():
        scenario = int(np.argmax(bad.reshape(bad.shape[0], -1).any(axis=1)))
        raise DivergenceError(step, scenario)


def _as_ensemble_array(x: Any, paths: GBrownianPaths, dim_d: int, what: str) -> np.ndarray:
    v = _values(x)
    if v.ndim == 2:
        v = v[..., None]
    ens = paths.ensemble
    expected = (ens.n_scenarios, ens.n_paths, dim_d)
    if v.shape != expected:
        raise DimensionError(f"{what} has shape {v.shape}, expected {expected}")
    return v


def euler(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    x0: np.ndarray,
    law: np.ndarray | None = None,
) -> np.ndarray:
    """Run the recursion from ``x0`` of shape ``(S, N, d)``.

    ``law`` is the ``(S, N, M + 1, d)`` array supplying the mean-field argument;
    ``None`` means the solution itself.
    """
    grid = paths.ensemble.grid
    m, delta = grid.steps, grid.delta
    out = np.empty(x0.shape[:2] + (m + 1,) + x0.shape[2:])
    out[:, :, 0] = x0
    for k in range(m):
        s = grid.node(k)
        xk = out[:, :, k]
        mf = xk if law is None else law[:, :, k]
        b = bundle.value("b", s, xk, mf)
        h = bundle.value("h", s, xk, mf)
        g = bundle.value("g", s, xk, mf)
        nxt = xk + b * delta + qv_term(h, paths.dqv[:, k]) + noise_term(g, paths.db_step(k))
        check_state(nxt, k + 1)
        out[:, :, k + 1] = nxt
    return out


@dataclass(frozen=True)
class ForwardSolution:
    """Mean-field solution ``X^{t, xi}`` together with the paths it was built on."""

    paths: GBrownianPaths
    x_meanfield: ProcessTensor
    xi0: RandomVariable

    def law(self, k: int) -> np.ndarray:
        """Read-only node-``k`` slice used as mean-field argument by frozen solves."""
        return self.x_meanfield.values[:, :, k]

    @property
    def law_cache(self) -> list[np.ndarray]:
        return [self.law(k) for k in range(self.x_meanfield.n_nodes)]


@dataclass(frozen=True)
class FrozenSolution:
    """Solution with the mean-field argument frozen to a forward solution.

    ``initial`` is the deterministic start point ``(d,)`` or, for a
    concatenated solve, the per-path random variable.
    """

    forward: ForwardSolution
    x_frozen: ProcessTensor
    initial: np.ndarray | RandomVariable

    @property
    def paths(self) -> GBrownianPaths:
        return self.forward.paths


def solve_mean_field(bundle: CoefficientBundle, xi0: Any, paths: GBrownianPaths) -> ForwardSolution:
    """Euler scheme for the mean-field equation started from ``xi0``."""
    x0 = _as_ensemble_array(xi0, paths, bundle.dim_d, "initial condition")
    if paths.dim_n != bundle.dim_n:
        raise ConfigurationError("bundle and paths disagree on the Brownian dimension")
    states = euler(bundle, paths, x0)
    return ForwardSolution(paths, ProcessTensor(states), RandomVariable(x0))


def _check_forward(forward: ForwardSolution, paths: GBrownianPaths | None) -> GBrownianPaths:
    if paths is not None and paths is not forward.paths:
        raise ConfigurationError("forward solution was computed on different paths")
    return forward.paths


def solve_frozen(
    bundle: CoefficientBundle,
    x0: Any,
    forward: ForwardSolution,
    paths: GBrownianPaths | None = None,
) -> FrozenSolution:
    """Solve from the deterministic point ``x0`` with the law of ``forward`` frozen."""
    paths = _check_forward(forward, paths)
    point = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if point.shape != (bundle.dim_d,):
        raise DimensionError(f"start point has shape {point.shape}, expected ({bundle.dim_d},)")
    ens = paths.ensemble
    start = np.broadcast_to(point, (ens.n_scenarios, ens.n_paths, bundle.dim_d))
    states = euler(bundle, paths, start, forward.x_meanfield.values)
    return FrozenSolution(forward, ProcessTensor(states), point)


def concatenate(
    bundle: CoefficientBundle,
    eta: Any,
    forward: ForwardSolution,
    paths: GBrownianPaths | None = None,
) -> FrozenSolution:
    """Frozen-law solve started path by path from the random variable ``eta``."""
    paths = _check_forward(forward, paths)
    start = _as_ensemble_array(eta, paths, bundle.dim_d, "concatenation start")
    states = euler(bundle, paths, start, forward.x_meanfield.values)
    return FrozenSolution(forward, ProcessTensor(states), RandomVariable(start))


def node_summary(x: ProcessTensor, component: int = 0) -> dict[str, np.ndarray]:
    """Upper mean, lower mean and L2 norm of one component at every node."""
    v = x.values
    m1 = v.shape[2]
    upper = np.empty(m1)
    lower = np.empty(m1)
    l2 = np.empty(m1)
    for k in range(m1):
        comp = v[:, :, k, component]
        upper[k] = np.max(scenario_means(comp))
        lower[k] = -np.max(scenario_means(-comp))
        l2[k] = lp_norm(v[:, :, k], 2)
    return {"node": np.arange(m1), "upper_mean": upper, "lower_mean": lower, "l2_norm": l2}

