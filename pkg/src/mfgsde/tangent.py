"""First- and second-order tangent processes of the solution maps.

All recursions reuse the node states and increments of the forward solves they
linearize. The discrete tangent is therefore the exact derivative of the
discrete solution map, and finite-difference checks converge at the analytic
rate instead of stalling at the discretization error.

Kinds
-----
``A_x``      x-derivative ``D_x X^{x, xi} y`` (also along a concatenated solve)
``Y_xi_xi``  correction term of the xi-derivative of the mean-field solution
``Y_x_xi``   xi-derivative of the frozen solution
``Dxi_X``    full xi-derivative of the mean-field solution (A along X^xi plus Y)
``C_xx``     second x-derivative
``D_x_xi``   mixed derivative
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .coefficients import NAMES, CoefficientBundle
from .ensemble import ProcessTensor, RandomVariable, _values
from .errors import ConfigurationError, DimensionError
from .gbrownian import GBrownianPaths
from .solver import (
    ForwardSolution,
    FrozenSolution,
    check_state,
    noise_term,
    qv_term,
)

__all__ = [
    "KINDS",
    "Y_START",
    "TangentSolution",
    "solve_A",
    "dx_concatenated",
    "solve_Y_xi",
    "solve_Y_x",
    "frechet_xi",
    "solve_C",
    "solve_D",
]

KINDS = ("A_x", "Y_xi_xi", "Y_x_xi", "Dxi_X", "C_xx", "D_x_xi")

# Start value of both Y processes. "zero" makes A + Y the derivative of the
# solution map; "eta" starts Y at the direction itself (see the README).
Y_START = "zero"


@dataclass(frozen=True)
class TangentSolution:
    kind: str
    process: ProcessTensor
    directions: dict = field(default_factory=dict, repr=False)
    base: Any = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tangent kind {self.kind!r}")

    @property
    def values(self) -> np.ndarray:
        return self.process.values


Drive = Callable[[str, float, np.ndarray, np.ndarray, np.ndarray, int], np.ndarray]


def _linear_recursion(
    paths: GBrownianPaths,
    states: np.ndarray,
    law: np.ndarray,
    z0: np.ndarray,
    drive: Drive,
) -> np.ndarray:
    """``Z_{k+1} = Z_k + F_b δ + F_h : Δ⟨B⟩ + F_g ΔB`` with ``F = drive(name, s, X_k, Ξ_k, Z_k, k)``."""
    grid = paths.ensemble.grid
    m, delta = grid.steps, grid.delta
    out = np.empty(z0.shape[:2] + (m + 1,) + z0.shape[2:])
    out[:, :, 0] = z0
    for k in range(m):
        s = grid.node(k)
        xk, mf, zk = states[:, :, k], law[:, :, k], out[:, :, k]
        fb, fh, fg = (drive(name, s, xk, mf, zk, k) for name in NAMES)
        nxt = zk + fb * delta + qv_term(fh, paths.dqv[:, k]) + noise_term(fg, paths.db_step(k))
        check_state(nxt, k + 1)
        out[:, :, k + 1] = nxt
    return out


def _shape(base: FrozenSolution | ForwardSolution) -> tuple[int, int, int]:
    v = base.x_frozen.values if isinstance(base, FrozenSolution) else base.x_meanfield.values
    return v.shape[0], v.shape[1], v.shape[3]


def _point(y: Any, d: int, what: str) -> np.ndarray:
    p = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if p.shape != (d,):
        raise DimensionError(f"{what} has shape {p.shape}, expected ({d},)")
    return p


def _rv(eta: Any, shape: tuple[int, int, int], what: str) -> np.ndarray:
    v = _values(eta)
    if v.ndim == 2:
        v = v[..., None]
    if v.shape != shape:
        raise DimensionError(f"{what} has shape {v.shape}, expected {shape}")
    return v


def _start(eta: np.ndarray, start: str) -> np.ndarray:
    if start == "zero":
        return np.zeros_like(eta)
    if start == "eta":
        return np.array(eta, dtype=np.float64)
    raise ConfigurationError(f"unknown Y start convention {start!r}")


def _tangent(kind, values, directions, base) -> TangentSolution:
    return TangentSolution(kind, ProcessTensor(values), directions, base)


def _check_base(t: TangentSolution, frozen: FrozenSolution, what: str) -> None:
    if t.base is not frozen:
        raise ConfigurationError(f"{what} was not computed along the given frozen solution")


def solve_A(bundle: CoefficientBundle, frozen: FrozenSolution, y: Any) -> TangentSolution:
    """x-derivative of the frozen solution in direction ``y``; starts at ``y``."""
    bundle.require("dx")
    s_, n_, d = _shape(frozen)
    y = _point(y, d, "direction y")
    z0 = np.broadcast_to(y, (s_, n_, d))

    def drive(name, s, xk, mf, zk, k):
        return bundle.dx(name, s, xk, mf, zk)

    out = _linear_recursion(frozen.paths, frozen.x_frozen.values,
                            frozen.forward.x_meanfield.values, z0, drive)
    return _tangent("A_x", out, {"y": y}, frozen)


def dx_concatenated(
    bundle: CoefficientBundle,
    forward: ForwardSolution,
    eta: Any,
    zeta: Any,
    concatenated: FrozenSolution | None = None,
) -> TangentSolution:
    """The x-derivative recursion along the solve started at ``eta``, started at ``zeta``.

    ``concatenated`` is the frozen solve started at ``eta``; if omitted it is
    taken to be the forward solution itself, which requires ``eta`` to be the
    forward initial condition.
    """
    bundle.require("dx")
    shape = _shape(forward)
    eta = _rv(eta, shape, "eta")
    zeta = _rv(zeta, shape, "zeta")
    if concatenated is None:
        if not np.array_equal(eta, forward.xi0.values):
            raise ConfigurationError("pass the concatenated solve for eta different from xi")
        states = forward.x_meanfield.values
    else:
        if concatenated.forward is not forward:
            raise ConfigurationError("concatenated solve belongs to another forward solution")
        if not np.array_equal(_values(concatenated.initial), eta):
            raise ConfigurationError("concatenated solve was not started at eta")
        states = concatenated.x_frozen.values

    def drive(name, s, xk, mf, zk, k):
        return bundle.dx(name, s, xk, mf, zk)

    out = _linear_recursion(forward.paths, states, forward.x_meanfield.values, zeta, drive)
    return _tangent("A_x", out, {"eta": RandomVariable(eta), "zeta": RandomVariable(zeta)},
                    concatenated if concatenated is not None else forward)


def solve_Y_xi(
    bundle: CoefficientBundle,
    forward: ForwardSolution,
    eta: Any,
    dxc: TangentSolution,
    start: str | None = None,
) -> TangentSolution:
    """Correction term of the xi-derivative of the mean-field solution.

    ``dxc`` is ``dx_concatenated(bundle, forward, xi, eta)``. The drift and
    diffusion are ``D_x f·Y + D_xi f·(dxc + Y)`` along the forward solution.
    """
    bundle.require("dx", "dxi")
    start = start or Y_START
    shape = _shape(forward)
    eta = _rv(eta, shape, "eta")
    if dxc.base is not forward or not np.array_equal(dxc.directions["zeta"].values, eta):
        raise ConfigurationError("dxc must be the x-derivative along the forward solution in direction eta")
    a = dxc.values

    def drive(name, s, xk, mf, zk, k):
        return bundle.dx(name, s, xk, mf, zk) + bundle.dxi(name, s, xk, mf, a[:, :, k] + zk)

    states = forward.x_meanfield.values
    out = _linear_recursion(forward.paths, states, states, _start(eta, start), drive)
    return _tangent("Y_xi_xi", out, {"eta": RandomVariable(eta), "start": start}, forward)


def frechet_xi(
    bundle: CoefficientBundle,
    forward: ForwardSolution,
    eta: Any,
    start: str | None = None,
) -> TangentSolution:
    """xi-derivative of the mean-field solution: ``dx_concatenated + Y``.

    The two summands are kept in ``directions["parts"]`` so that callers can
    pass them on to :func:`solve_Y_x` and :func:`solve_D`.
    """
    dxc = dx_concatenated(bundle, forward, forward.xi0, eta)
    y = solve_Y_xi(bundle, forward, eta, dxc, start)
    total = dxc.values + y.values
    return _tangent("Dxi_X", total, {"eta": y.directions["eta"], "parts": (dxc, y)}, forward)


def solve_Y_x(
    bundle: CoefficientBundle,
    frozen: FrozenSolution,
    eta: Any,
    dxi_x: TangentSolution,
    start: str | None = None,
) -> TangentSolution:
    """xi-derivative of the frozen solution in direction ``eta``.

    ``dxi_x`` is :func:`frechet_xi` of the forward solution in the same
    direction. Its value enters through ``D_xi f`` evaluated along the frozen
    states.
    """
    bundle.require("dx", "dxi")
    start = start or Y_START
    shape = _shape(frozen)
    eta = _rv(eta, shape, "eta")
    if dxi_x.kind != "Dxi_X" or dxi_x.base is not frozen.forward:
        raise ConfigurationError("dxi_x must be frechet_xi of the same forward solution")
    if not np.array_equal(dxi_x.directions["eta"].values, eta):
        raise ConfigurationError("dxi_x was computed for another direction")
    v = dxi_x.values

    def drive(name, s, xk, mf, zk, k):
        return bundle.dx(name, s, xk, mf, zk) + bundle.dxi(name, s, xk, mf, v[:, :, k])

    out = _linear_recursion(frozen.paths, frozen.x_frozen.values,
                            frozen.forward.x_meanfield.values, _start(eta, start), drive)
    return _tangent("Y_x_xi", out, {"eta": RandomVariable(eta), "start": start}, frozen)


def solve_C(
    bundle: CoefficientBundle,
    frozen: FrozenSolution,
    a_y: TangentSolution,
    a_z: TangentSolution,
) -> TangentSolution:
    """Second x-derivative in directions ``(y, z)``; starts at zero."""
    bundle.require("dx", "dxx")
    for t in (a_y, a_z):
        _check_base(t, frozen, "A")
    ay, az = a_y.values, a_z.values

    def drive(name, s, xk, mf, zk, k):
        return bundle.dx(name, s, xk, mf, zk) + bundle.dxx(name, s, xk, mf, ay[:, :, k], az[:, :, k])

    z0 = np.zeros(_shape(frozen))
    out = _linear_recursion(frozen.paths, frozen.x_frozen.values,
                            frozen.forward.x_meanfield.values, z0, drive)
    return _tangent("C_xx", out, {"y": a_y.directions["y"], "z": a_z.directions["y"]}, frozen)


def solve_D(
    bundle: CoefficientBundle,
    frozen: FrozenSolution,
    a_y: TangentSolution,
    y_x: TangentSolution,
    dxi_x: TangentSolution,
    mixed: str = "dxdxi",
) -> TangentSolution:
    """Mixed derivative in directions ``(y, eta)``; starts at zero.

    Sources are ``D_x^2 f(A_y, Y_x)`` and the mixed second derivative applied
    to ``(dxi_x, A_y)``. ``mixed`` picks which mixed oracle supplies the latter;
    both must agree for coefficients that satisfy the interchange identity.
    """
    if mixed not in ("dxdxi", "dxidx"):
        raise ConfigurationError(f"mixed must be 'dxdxi' or 'dxidx', got {mixed!r}")
    bundle.require("dx", "dxx", mixed)
    _check_base(a_y, frozen, "A")
    _check_base(y_x, frozen, "Y")
    if dxi_x.kind != "Dxi_X" or dxi_x.base is not frozen.forward:
        raise ConfigurationError("dxi_x must be frechet_xi of the same forward solution")
    ay, yx, v = a_y.values, y_x.values, dxi_x.values

    if mixed == "dxdxi":
        def cross(name, s, xk, mf, k):
            return bundle.dxdxi(name, s, xk, mf, v[:, :, k], ay[:, :, k])
    else:
        def cross(name, s, xk, mf, k):
            return bundle.dxidx(name, s, xk, mf, ay[:, :, k], v[:, :, k])

    def drive(name, s, xk, mf, zk, k):
        return (bundle.dx(name, s, xk, mf, zk)
                + bundle.dxx(name, s, xk, mf, ay[:, :, k], yx[:, :, k])
                + cross(name, s, xk, mf, k))

    z0 = np.zeros(_shape(frozen))
    out = _linear_recursion(frozen.paths, frozen.x_frozen.values,
                            frozen.forward.x_meanfield.values, z0, drive)
    return _tangent("D_x_xi", out, {"y": a_y.directions["y"], "eta": y_x.directions["eta"],
                                    "mixed": mixed}, frozen)
