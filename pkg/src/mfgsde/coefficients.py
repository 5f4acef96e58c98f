"""Coefficient bundles ``(b, h, g)`` with derivative oracles and Lipschitz metadata.

A bundle evaluates each coefficient at a state ``x`` (an array whose last
axis has length ``d``; leading axes are batch axes) and a mean-field argument
``xi``, which is a whole ensemble array of shape ``(S, N, d)``. Outputs have
shape ``batch + (d,)`` for ``b``, ``batch + (d, n, n)`` for ``h`` and
``batch + (d, n)`` for ``g``.

The oracles are

=========  =====================================================
``value``  ``f(s, x, xi)``
``dx``     ``D_x f(s, x, xi) y``
``dxi``    ``D_xi f(s, x, xi) eta`` (``eta`` an ensemble array)
``dxx``    ``D_x^2 f(s, x, xi)(y, z)``
``dxdxi``  ``D_x[D_xi f(s, x, xi) eta] y``
``dxidx``  ``D_xi[D_x f(s, x, xi) y] eta``
=========  =====================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .ensemble import _values, lp_norm, tree_sum
from .errors import ConfigurationError
from .rng import stream

__all__ = [
    "NAMES",
    "ORACLES",
    "CoefficientBundle",
    "CallableBundle",
    "ReferenceFunctional",
    "ZeroBundle",
    "AffineBundle",
    "SmoothBundle",
    "builtin",
    "FAMILIES",
    "ProbeSpec",
    "AssumptionReport",
    "probe_assumptions",
    "interchange_check",
]

NAMES = ("b", "h", "g")
ORACLES = ("value", "dx", "dxi", "dxx", "dxdxi", "dxidx")

# sup |tanh''| and sup |tanh'''|
_TANH2 = 4.0 / (3.0 * math.sqrt(3.0))
_TANH3 = 2.0


def _as_majorant(a: float | Callable[[float], float]) -> Callable[[float], float]:
    if callable(a):
        return a
    a = float(a)
    return lambda s: a


class CoefficientBundle:
    """Base class. Subclasses override the oracles they provide.

    An oracle that is not overridden raises :class:`ConfigurationError`, and
    :meth:`provides` reports it as unavailable, so tangent solvers can refuse
    early instead of falling back silently.
    """

    q0: float = math.inf
    q1: float = math.inf

    def __init__(self, dim_d: int, dim_n: int):
        if dim_d < 1 or dim_n < 1:
            raise ConfigurationError("dimensions must be >= 1")
        self.dim_d = int(dim_d)
        self.dim_n = int(dim_n)

    # metadata ---------------------------------------------------------------

    def alpha0(self, s: float) -> float:
        return 1.0

    def alpha1(self, s: float) -> float:
        return 1.0

    def alpha2(self, s: float) -> float:
        return 1.0

    def component_bounds(self, s: float) -> dict[str, dict[str, np.ndarray]]:
        """Per-component constants used to build Grönwall bounds.

        ``lip0[name]`` bounds the Lipschitz constant of each component in
        ``(x, xi)`` (and hence both first derivatives). ``lip1[name]`` bounds
        the Lipschitz constants of the first derivatives and the size of the
        second derivatives. The default takes the declared majorants.
        """
        a0, a1 = self.alpha0(s), self.alpha1(s)
        return {
            "lip0": {n: np.full(self.shape(n), a0) for n in NAMES},
            "lip1": {n: np.full(self.shape(n), a1) for n in NAMES},
        }

    def shape(self, name: str) -> tuple[int, ...]:
        d, n = self.dim_d, self.dim_n
        return {"b": (d,), "h": (d, n, n), "g": (d, n)}[name]

    def provides(self, oracle: str) -> bool:
        if oracle not in ORACLES:
            raise ValueError(f"unknown oracle {oracle!r}")
        return getattr(type(self), oracle) is not getattr(CoefficientBundle, oracle)

    def require(self, *oracles: str) -> None:
        missing = [o for o in oracles if not self.provides(o)]
        if missing:
            raise ConfigurationError(
                f"{type(self).__name__} does not provide oracle(s) {missing}"
            )

    # oracles ----------------------------------------------------------------

    def value(self, name, s, x, xi):
        raise ConfigurationError("value oracle not provided")

    def dx(self, name, s, x, xi, y):
        raise ConfigurationError("dx oracle not provided")

    def dxi(self, name, s, x, xi, eta):
        raise ConfigurationError("dxi oracle not provided")

    def dxx(self, name, s, x, xi, y, z):
        raise ConfigurationError("dxx oracle not provided")

    def dxdxi(self, name, s, x, xi, eta, y):
        raise ConfigurationError("dxdxi oracle not provided")

    def dxidx(self, name, s, x, xi, y, eta):
        raise ConfigurationError("dxidx oracle not provided")

    def eval_b(self, s, x, xi):
        return self.value("b", s, x, xi)

    def eval_h(self, s, x, xi):
        return self.value("h", s, x, xi)

    def eval_g(self, s, x, xi):
        return self.value("g", s, x, xi)


class CallableBundle(CoefficientBundle):
    """Bundle assembled from user callables.

    Each oracle argument is a mapping from ``"b"``, ``"h"``, ``"g"`` to a
    callable with the argument order of the matching method, minus ``name``.
    Oracles left as ``None`` are reported as unavailable.

    >>> zero = lambda s, x, xi: np.zeros(x.shape)
    >>> bundle = CallableBundle(1, 1, value={"b": zero, "h": ..., "g": ...})  # doctest: +SKIP
    """

    def __init__(
        self,
        dim_d: int,
        dim_n: int,
        value: Mapping[str, Callable],
        dx: Mapping[str, Callable] | None = None,
        dxi: Mapping[str, Callable] | None = None,
        dxx: Mapping[str, Callable] | None = None,
        dxdxi: Mapping[str, Callable] | None = None,
        dxidx: Mapping[str, Callable] | None = None,
        alpha0: float | Callable = 1.0,
        alpha1: float | Callable = 1.0,
        alpha2: float | Callable = 1.0,
        q0: float = 2.0,
        q1: float = 2.0,
    ):
        super().__init__(dim_d, dim_n)
        self._fns = {"value": value, "dx": dx, "dxi": dxi, "dxx": dxx,
                     "dxdxi": dxdxi, "dxidx": dxidx}
        for oracle, fns in self._fns.items():
            if fns is not None and set(fns) != set(NAMES):
                raise ConfigurationError(f"{oracle} needs callables for b, h and g")
        if value is None:
            raise ConfigurationError("value callables are mandatory")
        self._a0, self._a1, self._a2 = map(_as_majorant, (alpha0, alpha1, alpha2))
        self.q0, self.q1 = float(q0), float(q1)

    def provides(self, oracle: str) -> bool:
        if oracle not in ORACLES:
            raise ValueError(f"unknown oracle {oracle!r}")
        return self._fns[oracle] is not None

    def _call(self, oracle, name, *args):
        fns = self._fns[oracle]
        if fns is None:
            raise ConfigurationError(f"{oracle} oracle not provided")
        return np.asarray(fns[name](*args), dtype=np.float64)

    def alpha0(self, s):
        return float(self._a0(s))

    def alpha1(self, s):
        return float(self._a1(s))

    def alpha2(self, s):
        return float(self._a2(s))

    def value(self, name, s, x, xi):
        return self._call("value", name, s, x, xi)

    def dx(self, name, s, x, xi, y):
        return self._call("dx", name, s, x, xi, y)

    def dxi(self, name, s, x, xi, eta):
        return self._call("dxi", name, s, x, xi, eta)

    def dxx(self, name, s, x, xi, y, z):
        return self._call("dxx", name, s, x, xi, y, z)

    def dxdxi(self, name, s, x, xi, eta, y):
        return self._call("dxdxi", name, s, x, xi, eta, y)

    def dxidx(self, name, s, x, xi, y, eta):
        return self._call("dxidx", name, s, x, xi, y, eta)


# --------------------------------------------------------------------------
# Reference functional
# --------------------------------------------------------------------------


class ReferenceFunctional:
    """Linear functional ``l(xi) = mean_n weight_nᵀ xi[scenario, n]``.

    ``weight`` is either a fixed vector ``(d,)`` or per-path weights
    ``(N, d)``.
    """

    def __init__(self, weight: Any, scenario_index: int = 0):
        w = np.asarray(weight, dtype=np.float64)
        if w.ndim not in (1, 2) or not np.all(np.isfinite(w)):
            raise ConfigurationError("weight must be a finite (d,) or (N, d) array")
        self.weight = w
        self.scenario_index = int(scenario_index)

    @property
    def dim_d(self) -> int:
        return self.weight.shape[-1]

    @property
    def norm_l2(self) -> float:
        """Constant ``c`` with ``|l(xi)| <= c ||xi||_{L2}``."""
        sq = np.sum(self.weight**2, axis=-1)
        return float(np.sqrt(np.mean(sq)))

    @property
    def norm_l1(self) -> float:
        """Constant ``c`` with ``|l(xi)| <= c ||xi||_{L1}``."""
        return float(np.max(np.sqrt(np.sum(self.weight**2, axis=-1))))

    def __call__(self, xi: Any) -> float:
        v = _values(xi)
        if self.scenario_index >= v.shape[0]:
            raise ConfigurationError(
                f"reference scenario {self.scenario_index} not in ensemble of {v.shape[0]}"
            )
        v = v[self.scenario_index]
        w = self.weight
        if w.ndim == 2 and w.shape[0] != v.shape[0]:
            raise ConfigurationError("per-path weight does not match the number of paths")
        dot = v[..., 0] * w[..., 0]
        for m in range(1, v.shape[-1]):
            dot = dot + v[..., m] * w[..., m]
        return float(tree_sum(dot, axis=0) / v.shape[0])


def _lift(x: np.ndarray, name: str) -> np.ndarray:
    """View ``x[..., k]`` so that it broadcasts against the component axes of ``name``."""
    if name == "b":
        return x
    if name == "h":
        return x[..., :, None, None]
    return x[..., :, None]


def _contract(x: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """``sum_m mat[..., m] x[..., m]`` for component tensor ``mat`` of shape ``F + (d,)``."""
    fshape = mat.shape[:-1]
    lead = x.shape[:-1]
    xs = x.reshape(lead + (1,) * len(fshape) + (x.shape[-1],))
    out = xs[..., 0] * mat[..., 0]
    for m in range(1, x.shape[-1]):
        out = out + xs[..., m] * mat[..., m]
    return out


# --------------------------------------------------------------------------
# Built-in families
# --------------------------------------------------------------------------


class ZeroBundle(CoefficientBundle):
    """All coefficients and derivatives vanish."""

    def _zeros(self, name, x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + self.shape(name))

    def value(self, name, s, x, xi):
        return self._zeros(name, x)

    def dx(self, name, s, x, xi, y):
        return self._zeros(name, x)

    def dxi(self, name, s, x, xi, eta):
        return self._zeros(name, x)

    def dxx(self, name, s, x, xi, y, z):
        return self._zeros(name, x)

    def dxdxi(self, name, s, x, xi, eta, y):
        return self._zeros(name, x)

    def dxidx(self, name, s, x, xi, y, eta):
        return self._zeros(name, x)

    def component_bounds(self, s):
        z = {n: np.zeros(self.shape(n)) for n in NAMES}
        return {"lip0": z, "lip1": dict(z)}


class _FamilyBase(CoefficientBundle):
    def __init__(self, dim_d, dim_n, ell: ReferenceFunctional, overrides: dict):
        super().__init__(dim_d, dim_n)
        if ell.dim_d != dim_d:
            raise ConfigurationError("reference weight dimension does not match d")
        self.ell = ell
        self._overrides = overrides

    def _meta(self, key: str, derived: float) -> float:
        return float(self._overrides.get(key, derived))

    def alpha0(self, s):
        return self._meta("alpha0", self._alpha[0])

    def alpha1(self, s):
        return self._meta("alpha1", self._alpha[1])

    def alpha2(self, s):
        return self._meta("alpha2", self._alpha[2])

    def component_bounds(self, s):
        return {k: {n: v.copy() for n, v in d.items()} for k, d in self._bounds.items()}


class AffineBundle(_FamilyBase):
    """``f(s, x, xi) = A x + c + q l(xi)`` per coefficient."""

    def __init__(self, dim_d, dim_n, A, c, q, ell, overrides=None):
        super().__init__(dim_d, dim_n, ell, overrides or {})
        self.A = {n: np.asarray(A[n], dtype=np.float64) for n in NAMES}
        self.c = {n: np.asarray(c[n], dtype=np.float64) for n in NAMES}
        self.q = {n: np.asarray(q[n], dtype=np.float64) for n in NAMES}
        for n in NAMES:
            if self.A[n].shape != self.shape(n) + (dim_d,):
                raise ConfigurationError(f"affine matrix for {n} has shape {self.A[n].shape}")
        w2, w1 = ell.norm_l2, ell.norm_l1
        lip0 = {n: np.maximum(np.sqrt(np.sum(self.A[n] ** 2, axis=-1)), np.abs(self.q[n]) * w2)
                for n in NAMES}
        lip1 = {n: np.abs(self.q[n]) * w1 for n in NAMES}
        self._bounds = {"lip0": lip0, "lip1": lip1}
        a0 = max([1.0] + [float(np.max(v)) for v in lip0.values()])
        a1 = max([1.0] + [float(np.max(v)) for v in lip1.values()])
        self._alpha = (a0, a1, 1.0)

    def value(self, name, s, x, xi):
        x = np.asarray(x, dtype=np.float64)
        return _contract(x, self.A[name]) + self.c[name] + self.q[name] * self.ell(xi)

    def dx(self, name, s, x, xi, y):
        return _contract(np.asarray(y, dtype=np.float64), self.A[name]) + np.zeros(
            np.shape(x)[:-1] + self.shape(name))

    def dxi(self, name, s, x, xi, eta):
        return np.broadcast_to(self.q[name] * self.ell(eta),
                               np.shape(x)[:-1] + self.shape(name)).copy()

    def _zeros(self, name, x):
        return np.zeros(np.shape(x)[:-1] + self.shape(name))

    def dxx(self, name, s, x, xi, y, z):
        return self._zeros(name, x)

    def dxdxi(self, name, s, x, xi, eta, y):
        return self._zeros(name, x)

    def dxidx(self, name, s, x, xi, y, eta):
        return self._zeros(name, x)


class SmoothBundle(_FamilyBase):
    """Component ``(k, ...)`` of each coefficient is

    ``tanh_k tanh(x_k) + sin_k sin(l(xi)) + shift_k + cross_k sin(x_k) sin(l(xi))``.

    The cross term couples state and mean field so that the mixed second
    derivatives do not vanish.
    """

    def __init__(self, dim_d, dim_n, tanh, sin, shift, cross, ell, overrides=None):
        super().__init__(dim_d, dim_n, ell, overrides or {})
        self.p = {}
        for n in NAMES:
            self.p[n] = {k: np.broadcast_to(np.asarray(v[n], dtype=np.float64), self.shape(n)).copy()
                         for k, v in (("tanh", tanh), ("sin", sin), ("shift", shift), ("cross", cross))}
        w2, w1 = ell.norm_l2, ell.norm_l1
        lip0, lip1, kappa, mixed = {}, {}, [], []
        for n in NAMES:
            t, sn, e = (np.abs(self.p[n][k]) for k in ("tanh", "sin", "cross"))
            lip0[n] = np.maximum(t + e, (sn + e) * w2)
            lip1[n] = np.maximum.reduce([
                _TANH2 * t + e,          # D_x f in x and |D_x^2 f|
                e * w2,                  # D_x f in xi
                e * w1,                  # D_xi f in x (per unit ||zeta||)
                (sn + e) * w2 * w1,      # D_xi f in xi
                (sn + e) * w1,           # |D_xi f eta| against ||eta||_L1
            ])
            kappa.append(float(np.max(_TANH3 * t + e)))
            mixed.append(float(np.max(np.maximum(e * w1, e * w1 * w2))))
        self._bounds = {"lip0": lip0, "lip1": lip1}
        a0 = max([1.0] + [float(np.max(v)) for v in lip0.values()])
        # the x-Lipschitz constant of D_x^2 f is compared against 4 alpha0^2
        a0 = max(a0, math.sqrt(max(kappa) / 4.0))
        a1 = max([1.0] + [float(np.max(v)) for v in lip1.values()])
        a2 = max([1.0] + mixed)
        self._alpha = (a0, a1, a2)

    def _parts(self, name, x, xi):
        xk = _lift(np.asarray(x, dtype=np.float64), name)
        return self.p[name], xk, self.ell(xi)

    def value(self, name, s, x, xi):
        p, xk, ll = self._parts(name, x, xi)
        sl = math.sin(ll)
        return p["tanh"] * np.tanh(xk) + p["sin"] * sl + p["shift"] + p["cross"] * np.sin(xk) * sl

    def dx(self, name, s, x, xi, y):
        p, xk, ll = self._parts(name, x, xi)
        yk = _lift(np.asarray(y, dtype=np.float64), name)
        sech2 = 1.0 / np.cosh(xk) ** 2
        return (p["tanh"] * sech2 + p["cross"] * np.cos(xk) * math.sin(ll)) * yk

    def dxi(self, name, s, x, xi, eta):
        p, xk, ll = self._parts(name, x, xi)
        cl = math.cos(ll)
        return (p["sin"] * cl + p["cross"] * np.sin(xk) * cl) * self.ell(eta)

    def dxx(self, name, s, x, xi, y, z):
        p, xk, ll = self._parts(name, x, xi)
        yk = _lift(np.asarray(y, dtype=np.float64), name)
        zk = _lift(np.asarray(z, dtype=np.float64), name)
        th = np.tanh(xk)
        curv = -2.0 * p["tanh"] * th * (1.0 - th * th) - p["cross"] * np.sin(xk) * math.sin(ll)
        return curv * yk * zk

    def dxdxi(self, name, s, x, xi, eta, y):
        # x-derivative of (sin + cross sin(x_k)) cos(l) l(eta)
        p, xk, ll = self._parts(name, x, xi)
        yk = _lift(np.asarray(y, dtype=np.float64), name)
        return p["cross"] * np.cos(xk) * yk * (math.cos(ll) * self.ell(eta))

    def dxidx(self, name, s, x, xi, y, eta):
        # xi-derivative of (tanh sech^2(x_k) + cross cos(x_k) sin(l)) y_k
        p, xk, ll = self._parts(name, x, xi)
        yk = _lift(np.asarray(y, dtype=np.float64), name)
        dl = math.cos(ll) * self.ell(eta)
        return (p["cross"] * np.cos(xk)) * dl * yk


def _block(params: Mapping, name: str, keys: tuple[str, ...]) -> dict:
    blk = params.get(name, {}) or {}
    if not isinstance(blk, Mapping):
        raise ConfigurationError(f"parameters for {name} must be a mapping")
    unknown = set(blk) - set(keys)
    if unknown:
        raise ConfigurationError(f"unknown parameters for {name}: {sorted(unknown)}")
    return dict(blk)


def _affine_matrix(spec: Any, shape_f: tuple[int, ...], d: int) -> np.ndarray:
    a = np.asarray(spec, dtype=np.float64)
    if a.ndim == 0:
        # scalar: component (k, ...) reads x_k
        out = np.zeros(shape_f + (d,))
        for k in range(d):
            out[k, ..., k] = float(a)
        return out
    if shape_f == (d,) and a.shape == (d, d):
        return a
    try:
        return np.broadcast_to(a, shape_f + (d,)).copy()
    except ValueError as exc:
        raise ConfigurationError(f"affine matrix of shape {a.shape} incompatible with {shape_f}") from exc


def builtin(family_id: str, params: Mapping | None = None) -> CoefficientBundle:
    """Build one of the shipped families.

    Common parameters: ``dim_d``, ``dim_n`` (default 1), ``weight`` (length
    ``d``, default ones) and ``scenario`` (default 0) for the reference
    functional, and optional overrides ``alpha0``, ``alpha1``, ``alpha2`` of the
    derived majorants.

    ``affine`` takes blocks ``b``, ``h``, ``g`` with keys ``A``, ``c``, ``q``.
    A scalar ``A`` means component ``(k, ...)`` equals ``A x_k``.
    ``smooth`` takes blocks with keys ``tanh``, ``sin``, ``shift``, ``cross``.
    """
    params = dict(params or {})
    common = {"dim_d", "dim_n", "weight", "scenario", "alpha0", "alpha1", "alpha2"}
    if family_id not in FAMILIES:
        raise ConfigurationError(f"unknown coefficient family {family_id!r}")
    allowed = common | ({"b", "h", "g"} if family_id != "zero" else set())
    unknown = set(params) - allowed
    if unknown:
        raise ConfigurationError(f"unknown parameters for family {family_id!r}: {sorted(unknown)}")
    d = int(params.get("dim_d", 1))
    n = int(params.get("dim_n", 1))
    if family_id == "zero":
        return ZeroBundle(d, n)
    weight = params.get("weight", np.ones(d))
    ell = ReferenceFunctional(weight, int(params.get("scenario", 0)))
    overrides = {k: float(params[k]) for k in ("alpha0", "alpha1", "alpha2") if k in params}
    shapes = {"b": (d,), "h": (d, n, n), "g": (d, n)}
    if family_id == "affine":
        A, c, q = {}, {}, {}
        for name in NAMES:
            blk = _block(params, name, ("A", "c", "q"))
            A[name] = _affine_matrix(blk.get("A", 0.0), shapes[name], d)
            c[name] = np.broadcast_to(np.asarray(blk.get("c", 0.0), float), shapes[name]).copy()
            q[name] = np.broadcast_to(np.asarray(blk.get("q", 0.0), float), shapes[name]).copy()
        return AffineBundle(d, n, A, c, q, ell, overrides)
    parts = {k: {} for k in ("tanh", "sin", "shift", "cross")}
    for name in NAMES:
        blk = _block(params, name, tuple(parts))
        for k in parts:
            parts[k][name] = blk.get(k, 0.0)
    return SmoothBundle(d, n, parts["tanh"], parts["sin"], parts["shift"], parts["cross"],
                        ell, overrides)


FAMILIES = ("zero", "affine", "smooth")


# --------------------------------------------------------------------------
# Assumption probes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeSpec:
    """Random probe configuration for assumption and interchange checks."""

    count: int = 64
    x_range: float = 2.0
    xi_scale: float = 1.0
    n_scenarios: int = 2
    n_paths: int = 32
    t_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0
    step: float = 1e-3


@dataclass
class AssumptionReport:
    ratios: dict[str, float]
    tolerance: float = 1e-9
    skipped: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r <= 1.0 + self.tolerance for r in self.ratios.values())

    @property
    def worst(self) -> tuple[str, float]:
        if not self.ratios:
            return ("", 0.0)
        k = max(self.ratios, key=self.ratios.get)
        return k, self.ratios[k]

    def to_dict(self) -> dict:
        return {"ratios": dict(self.ratios), "passed": self.passed,
                "tolerance": self.tolerance, "skipped": list(self.skipped)}


def _probe_points(bundle: CoefficientBundle, spec: ProbeSpec):
    """Yield probe tuples; random ones first, then steepest-point probes."""
    rng = stream(spec.seed, "coefficients.probes")
    d = bundle.dim_d
    shape_rv = (spec.n_scenarios, spec.n_paths, d)
    t0, t1 = spec.t_range

    def rv():
        return rng.normal(size=shape_rv) * spec.xi_scale + rng.normal(size=d)

    for i in range(spec.count):
        s = float(rng.uniform(t0, t1))
        x = rng.uniform(-spec.x_range, spec.x_range, size=d)
        y = rng.uniform(-spec.x_range, spec.x_range, size=d)
        z = rng.uniform(-spec.x_range, spec.x_range, size=d)
        xi, eta, zeta = rv(), rv(), rv()
        mode = i % 3
        if mode == 1:
            eta = xi
        elif mode == 2:
            y = x
        yield s, x, y, z, xi, eta, zeta
    xi = rv()
    h = spec.step
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        zero = np.zeros(d)
        yield t0, zero, h * e, e, xi, xi, rv()
        yield t0, zero, zero, e, xi, xi + h * e, rv()


def probe_assumptions(bundle: CoefficientBundle, spec: ProbeSpec | None = None,
                      tolerance: float = 1e-9) -> AssumptionReport:
    """Worst LHS/RHS ratio of every Lipschitz and bound inequality on probes.

    Inequalities whose oracles the bundle does not provide are listed in
    ``skipped``. Ratios with a vanishing right-hand side are not formed.
    """
    spec = spec or ProbeSpec()
    worst: dict[str, float] = {}
    skipped = [o for o in ORACLES if not bundle.provides(o)]

    def upd(key, lhs, rhs):
        lhs = float(np.max(np.abs(lhs))) if np.size(lhs) else 0.0
        if rhs > 0:
            worst[key] = max(worst.get(key, 0.0), lhs / rhs)
        else:
            worst.setdefault(key, 0.0)

    has = bundle.provides
    for s, x, y, z, xi, eta, zeta in _probe_points(bundle, spec):
        a0, a1, a2 = bundle.alpha0(s), bundle.alpha1(s), bundle.alpha2(s)
        dxn = float(np.linalg.norm(x - y))
        dxi = lp_norm(xi - eta, 2)
        nz, nzeta, nzeta1 = float(np.linalg.norm(z)), lp_norm(zeta, 2), lp_norm(zeta, 1)
        for name in NAMES:
            upd(f"lipschitz[{name}]",
                bundle.value(name, s, x, xi) - bundle.value(name, s, y, eta), a0 * (dxn + dxi))
            if has("dx"):
                upd(f"dx_bound[{name}]", bundle.dx(name, s, x, xi, z), a0 * nz)
                upd(f"dx_lipschitz[{name}]",
                    bundle.dx(name, s, x, xi, z) - bundle.dx(name, s, y, eta, z),
                    a1 * nz * (dxn + dxi))
            if has("dxi"):
                upd(f"dxi_bound[{name}]", bundle.dxi(name, s, x, xi, zeta), a0 * nzeta)
                upd(f"dxi_bound_l1[{name}]", bundle.dxi(name, s, x, xi, zeta), a1 * nzeta1)
                upd(f"dxi_lipschitz[{name}]",
                    bundle.dxi(name, s, x, xi, zeta) - bundle.dxi(name, s, y, eta, zeta),
                    a1 * nzeta * (dxn + dxi))
            if has("dxx"):
                kappa = 4.0 * a0 * a0
                upd(f"dxx_lipschitz[{name}]",
                    bundle.dxx(name, s, x, xi, z, z) - bundle.dxx(name, s, y, xi, z, z),
                    kappa * nz * nz * dxn)
            if has("dxdxi"):
                upd(f"dxdxi_lipschitz[{name}]",
                    bundle.dxdxi(name, s, x, xi, zeta, z) - bundle.dxdxi(name, s, y, eta, zeta, z),
                    a2 * nz * nzeta * (dxn + dxi))
            if has("dxidx"):
                upd(f"dxidx_lipschitz[{name}]",
                    bundle.dxidx(name, s, x, xi, z, zeta) - bundle.dxidx(name, s, y, eta, z, zeta),
                    a2 * nz * nzeta * (dxn + dxi))
    return AssumptionReport(worst, tolerance, skipped)


def interchange_check(bundle: CoefficientBundle, probes: ProbeSpec | None = None,
                      tolerance: float = 1e-9) -> dict:
    """Largest ``|dxdxi - dxidx|`` over probes (mixed derivatives must agree)."""
    bundle.require("dxdxi", "dxidx")
    probes = probes or ProbeSpec(count=100)
    worst = 0.0
    count = 0
    for s, x, _y, z, xi, _eta, zeta in _probe_points(bundle, probes):
        for name in NAMES:
            diff = bundle.dxdxi(name, s, x, xi, zeta, z) - bundle.dxidx(name, s, x, xi, z, zeta)
            worst = max(worst, float(np.max(np.abs(diff))))
        count += 1
    return {"max_abs_diff": worst, "probes": count, "tolerance": tolerance,
            "passed": worst <= tolerance}
