"""Scenario ensembles, random variables, processes and sublinear norms.

The uncertainty set of volatilities is represented by finitely many
piecewise-constant controls. Each control defines one scenario; all scenarios
share the same Wiener increments (common random numbers). The upper
expectation of a scalar random variable is the largest scenario mean.

Arrays follow one layout throughout the package:

* random variable: ``(S, N, d)``
* process: ``(S, N, M + 1, d)``

where ``S`` is the number of scenarios, ``N`` the number of paths and ``M`` the
number of time steps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, ParameterError
from .rng import stream

__all__ = [
    "SigmaSet",
    "TimeGrid",
    "VolatilityControl",
    "ScenarioEnsemble",
    "RandomVariable",
    "ProcessTensor",
    "tree_sum",
    "scenario_means",
    "sublinear_expectation",
    "lp_norm",
    "hp_norm",
    "mstar_norm",
]

_SYM_TOL = 1e-12


def tree_sum(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sum along ``axis`` with a fixed binary reduction tree.

    The tree depends only on the length of the axis, so the result is
    bit-reproducible regardless of memory layout or how the caller chunked
    the work.
    """
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    if a.shape[0] == 0:
        return np.zeros(a.shape[1:])
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            a = np.concatenate([a, np.zeros((1,) + a.shape[1:])], axis=0)
        a = a[0::2] + a[1::2]
    return a[0]


def _values(x: Any) -> np.ndarray:
    if isinstance(x, (RandomVariable, ProcessTensor)):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _frozen(a: np.ndarray) -> np.ndarray:
    # read-only view; callers hand over ownership of freshly built arrays
    a = np.asarray(a, dtype=np.float64).view()
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------
# Uncertainty set and time grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaSet:
    """Set of volatility matrices, given as an interval (n = 1) or by vertices.

    Use :meth:`interval` or :meth:`from_vertices` rather than the constructor.
    """

    dim_n: int
    kind: str
    low: float = 0.0
    high: float = 0.0
    vertices: tuple = field(default=(), repr=False)

    @classmethod
    def interval(cls, sigma_low: float, sigma_high: float) -> "SigmaSet":
        lo, hi = float(sigma_low), float(sigma_high)
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or lo > hi:
            raise ConfigurationError(
                f"interval volatility needs 0 <= low <= high, got [{lo}, {hi}]"
            )
        return cls(dim_n=1, kind="interval", low=lo, high=hi)

    @classmethod
    def from_vertices(cls, matrices: Sequence[Any]) -> "SigmaSet":
        mats = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in matrices]
        if not mats:
            raise ConfigurationError("vertex set must be non-empty")
        n = mats[0].shape[0]
        for m in mats:
            if m.shape != (n, n):
                raise ConfigurationError(f"vertex of shape {m.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(m)):
                raise ConfigurationError("vertex contains non-finite entries")
            if np.max(np.abs(m - m.T)) > _SYM_TOL:
                raise ConfigurationError("vertex matrix is not symmetric")
            if np.min(np.linalg.eigvalsh(m)) < -_SYM_TOL:
                raise ConfigurationError("vertex matrix is not positive semidefinite")
        return cls(dim_n=n, kind="vertices", vertices=tuple(_frozen(m) for m in mats))

    def extremes(self) -> np.ndarray:
        """Extreme volatility matrices, shape ``(V, n, n)``, duplicates removed."""
        if self.kind == "interval":
            pts = [self.low] if self.low == self.high else [self.low, self.high]
            return np.array(pts, dtype=np.float64).reshape(-1, 1, 1)
        out: list[np.ndarray] = []
        for m in self.vertices:
            if not any(np.array_equal(m, o) for o in out):
                out.append(np.asarray(m))
        return np.stack(out)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        if self.kind == "interval":
            v = float(theta.reshape(-1)[0])
            return theta.shape == (1, 1) and self.low <= v <= self.high
        return any(np.array_equal(theta, m) for m in self.vertices)

    def qv_rates(self) -> np.ndarray:
        """Quadratic-variation rates θθᵀ of the extremes, shape ``(V, n, n)``."""
        th = self.extremes()
        return np.einsum("vij,vkj->vik", th, th)

    @property
    def sigma_bar_sq(self) -> np.ndarray:
        """Per-coordinate maximal QV rate, shape ``(n,)``."""
        return np.max(np.diagonal(self.qv_rates(), axis1=1, axis2=2), axis=0)

    @property
    def sigma_low_sq(self) -> np.ndarray:
        """Per-coordinate minimal QV rate over the extremes, shape ``(n,)``."""
        return np.min(np.diagonal(self.qv_rates(), axis1=1, axis2=2), axis=0)

    @property
    def max_qv_frobenius(self) -> float:
        return float(max(np.linalg.norm(r) for r in self.qv_rates()))

    @property
    def max_qv_eigenvalue(self) -> float:
        return float(max(np.max(np.linalg.eigvalsh(r)) for r in self.qv_rates()))

    def to_dict(self) -> dict:
        if self.kind == "interval":
            return {"type": "interval", "low": self.low, "high": self.high}
        return {"type": "vertices", "matrices": [m.tolist() for m in self.vertices]}

    @classmethod
    def from_dict(cls, doc: dict) -> "SigmaSet":
        kind = doc.get("type")
        if kind == "interval":
            return cls.interval(doc["low"], doc["high"])
        if kind == "vertices":
            return cls.from_vertices(doc["matrices"])
        raise ConfigurationError(f"unknown sigma type {kind!r}")


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)):
            raise ConfigurationError("grid end points must be finite")
        if not self.t_start < self.t_end:
            raise ConfigurationError("grid needs t_start < t_end")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError("grid needs an integer number of steps >= 1")

    @property
    def delta(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def horizon(self) -> float:
        return self.t_end - self.t_start

    def node(self, k: int) -> float:
        return self.t_start + k * self.delta

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + self.delta * np.arange(self.steps + 1)

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "steps": self.steps}


@dataclass(frozen=True)
class VolatilityControl:
    """Piecewise-constant volatility, one ``(n, n)`` matrix per grid interval."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise DimensionError(f"control values must have shape (M, n, n), got {v.shape}")
        object.__setattr__(self, "values", _frozen(v))

    def validate(self, sigma: SigmaSet, grid: TimeGrid) -> None:
        if self.values.shape[0] != grid.steps:
            raise ConfigurationError("control length does not match the number of steps")
        if self.values.shape[1] != sigma.dim_n:
            raise ConfigurationError("control dimension does not match the volatility set")
        for th in self.values:
            if not sigma.contains(th):
                raise ConfigurationError("control takes a value outside the volatility set")


def build_controls(
    sigma: SigmaSet, grid: TimeGrid, scenario_count: int, macro_blocks: int = 4
) -> list[VolatilityControl]:
    """Constant controls at each extreme, then switching controls.

    Switching control ``j`` cycles through the extremes on a macro grid of
    ``macro_blocks * 2**j`` blocks (capped at one block per step).
    """
    if scenario_count < 1:
        raise ConfigurationError("scenario_count must be >= 1")
    ext = sigma.extremes()
    n_ext = ext.shape[0]
    m = grid.steps
    controls = [VolatilityControl(np.repeat(e[None], m, axis=0)) for e in ext]
    j = 0
    while len(controls) < scenario_count:
        blocks = min(m, macro_blocks * 2**j)
        block_of_step = (np.arange(m) * blocks) // m
        idx = (block_of_step + j + 1) % n_ext
        controls.append(VolatilityControl(ext[idx]))
        j += 1
    return controls[:scenario_count]


# --------------------------------------------------------------------------
# Ensemble
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioEnsemble:
    """S volatility controls times N shared Wiener paths on a time grid."""

    sigma: SigmaSet
    grid: TimeGrid
    controls: tuple
    wiener_increments: np.ndarray = field(repr=False)
    rng_seed: int
    macro_blocks: int = 4

    def __post_init__(self):
        if len(self.controls) < 1:
            raise ConfigurationError("ensemble needs at least one control")
        for c in self.controls:
            c.validate(self.sigma, self.grid)
        w = np.asarray(self.wiener_increments, dtype=np.float64)
        if w.ndim != 3 or w.shape[1] != self.grid.steps or w.shape[2] != self.sigma.dim_n:
            raise DimensionError(f"wiener increments have shape {w.shape}")
        if w.shape[0] < 1:
            raise ConfigurationError("ensemble needs at least one path")
        object.__setattr__(self, "wiener_increments", _frozen(w))

    @classmethod
    def generate(
        cls,
        sigma: SigmaSet,
        grid: TimeGrid,
        scenario_count: int,
        path_count: int,
        seed: int,
        macro_blocks: int = 4,
    ) -> "ScenarioEnsemble":
        if int(path_count) != path_count or path_count < 1:
            raise ConfigurationError("path_count must be an integer >= 1")
        controls = build_controls(sigma, grid, scenario_count, macro_blocks)
        rng = stream(seed, "ensemble.wiener")
        dw = rng.standard_normal((int(path_count), grid.steps, sigma.dim_n))
        dw *= np.sqrt(grid.delta)
        return cls(sigma, grid, tuple(controls), dw, int(seed), int(macro_blocks))

    @property
    def n_scenarios(self) -> int:
        return len(self.controls)

    @property
    def n_paths(self) -> int:
        return self.wiener_increments.shape[0]

    @property
    def dim_n(self) -> int:
        return self.sigma.dim_n

    @property
    def control_array(self) -> np.ndarray:
        """Stacked controls, shape ``(S, M, n, n)``."""
        return np.stack([c.values for c in self.controls])

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.to_dict(),
            "grid": self.grid.to_dict(),
            "scenario_count": self.n_scenarios,
            "path_count": self.n_paths,
            "seed": self.rng_seed,
            "macro_blocks": self.macro_blocks,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioEnsemble":
        allowed = {"sigma", "grid", "scenario_count", "path_count", "seed", "macro_blocks"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigurationError(f"unknown ensemble keys: {sorted(unknown)}")
        missing = {"sigma", "grid", "scenario_count", "path_count", "seed"} - set(doc)
        if missing:
            raise ConfigurationError(f"missing ensemble keys: {sorted(missing)}")
        g = doc["grid"]
        grid = TimeGrid(float(g.get("t_start", 0.0)), float(g["t_end"]), int(g["steps"]))
        return cls.generate(
            SigmaSet.from_dict(doc["sigma"]),
            grid,
            int(doc["scenario_count"]),
            int(doc["path_count"]),
            int(doc["seed"]),
            int(doc.get("macro_blocks", 4)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioEnsemble":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Random variables and processes
# --------------------------------------------------------------------------


class _ArrayOps:
    values: np.ndarray

    def _wrap(self, v):
        return type(self)(v)

    def __add__(self, other):
        return self._wrap(self.values + _values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _values(other))

    def __rsub__(self, other):
        return self._wrap(_values(other) - self.values)

    def __neg__(self):
        return self._wrap(-self.values)

    def __mul__(self, scalar):
        return self._wrap(self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._wrap(self.values / float(scalar))

    @property
    def shape(self):
        return self.values.shape


class RandomVariable(_ArrayOps):
    """Values indexed by (scenario, path, component)."""

    __slots__ = ("values",)

    def __init__(self, values: Any):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 2:
            v = v[..., None]
        if v.ndim != 3:
            raise DimensionError(f"random variable needs shape (S, N, d), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("random variable has non-finite entries")
        self.values = _frozen(v)

    @property
    def dim_d(self) -> int:
        return self.values.shape[2]

    @classmethod
    def constant(cls, value: Any, n_scenarios: int, n_paths: int) -> "RandomVariable":
        c = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls(np.broadcast_to(c, (n_scenarios, n_paths, c.shape[0])))

    @classmethod
    def from_paths(cls, values: Any, n_scenarios: int) -> "RandomVariable":
        """Broadcast per-path values ``(N, d)`` identically to every scenario."""
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        return cls(np.broadcast_to(v, (n_scenarios,) + v.shape))

    def __repr__(self):
        return f"RandomVariable(shape={self.values.shape})"


class ProcessTensor(_ArrayOps):
    """Values indexed by (scenario, path, node, component)."""

    __slots__ = ("values",)

    def __init__(self, values: Any):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 3:
            v = v[..., None]
        if v.ndim != 4:
            raise DimensionError(f"process needs shape (S, N, M+1, d), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("process has non-finite entries")
        self.values = _frozen(v)

    @property
    def dim_d(self) -> int:
        return self.values.shape[3]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[2]

    def node(self, k: int) -> RandomVariable:
        return RandomVariable(self.values[:, :, k])

    @property
    def terminal(self) -> RandomVariable:
        return self.node(self.n_nodes - 1)

    @property
    def initial(self) -> RandomVariable:
        return self.node(0)

    def __repr__(self):
        return f"ProcessTensor(shape={self.values.shape})"


# --------------------------------------------------------------------------
# Sublinear expectation and norms
# --------------------------------------------------------------------------


def scenario_means(x: Any) -> np.ndarray:
    """Per-scenario path means of a scalar array ``(S, N)`` or ``(S, N, 1)``."""
    v = _values(x)
    if v.ndim == 3:
        if v.shape[2] != 1:
            raise DimensionError("sublinear expectation needs a scalar random variable")
        v = v[..., 0]
    if v.ndim != 2:
        raise DimensionError(f"expected shape (S, N), got {v.shape}")
    return tree_sum(v, axis=1) / v.shape[1]


def sublinear_expectation(x: Any, return_scenario: bool = False):
    """Largest scenario mean of a scalar random variable.

    Ties go to the lowest scenario index. With ``return_scenario=True`` the
    maximizing index is returned as well.
    """
    means = scenario_means(x)
    s = int(np.argmax(means))
    if return_scenario:
        return float(means[s]), s
    return float(means[s])


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1:
        raise ParameterError(f"norm exponent must be >= 1, got {p}")
    return p


def _pow2_scaled(v: np.ndarray) -> tuple[np.ndarray, float]:
    # power-of-two rescaling is exact and keeps |x|^p clear of under/overflow
    m = float(np.max(np.abs(v))) if v.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return v, 1.0
    scale = math.ldexp(1.0, int(np.frexp(m)[1]))
    return v / scale, scale


def _norm_pow(v: np.ndarray, p: float) -> np.ndarray:
    sq = np.sum(v * v, axis=-1)
    if p == 2.0:
        return sq
    return sq ** (p / 2.0)


def lp_norm(x: Any, p: float = 2.0) -> float:
    """``E[|x|^p]^(1/p)`` with the Euclidean norm over components."""
    p = _check_p(p)
    v = _values(x)
    if v.ndim == 2:
        v = v[..., None]
    v, scale = _pow2_scaled(v)
    return scale * sublinear_expectation(_norm_pow(v, p)) ** (1.0 / p)


def hp_norm(x: Any, p: float = 2.0) -> float:
    """``E[max_k |X_k|^p]^(1/p)``, the maximum taken over grid nodes."""
    p = _check_p(p)
    v = _values(x)
    if v.ndim == 3:
        v = v[..., None]
    v, scale = _pow2_scaled(v)
    return scale * sublinear_expectation(np.max(_norm_pow(v, p), axis=2)) ** (1.0 / p)


def mstar_norm(x: Any, p: float, delta: float) -> float:
    """``(sum_k E[|X_k|^p] delta)^(1/p)`` over left endpoints ``k < M``."""
    p = _check_p(p)
    v = _values(x)
    if v.ndim == 3:
        v = v[..., None]
    v, scale = _pow2_scaled(v[:, :, :-1])
    pw = _norm_pow(v, p)
    node_e = np.max(tree_sum(pw, axis=1) / pw.shape[1], axis=0)
    return scale * float(tree_sum(node_e, axis=0) * delta) ** (1.0 / p)
