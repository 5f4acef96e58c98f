"""Finite-difference convergence studies for the tangent processes.

Every solve in a study runs on the same ``GBrownianPaths`` object, so the
remainders are deterministic functions of ε and a clean second-order decay is
visible down to the floating-point floor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import tangent
from ..coefficients import CoefficientBundle
from ..ensemble import RandomVariable, _values, hp_norm
from ..errors import ConfigurationError
from ..gbrownian import GBrownianPaths
from ..solver import concatenate, solve_frozen, solve_mean_field

__all__ = [
    "EPS_SCHEDULE",
    "ORDER_WINDOW",
    "RATIO_WINDOW",
    "FP_FLOOR",
    "ConvergenceReport",
    "fitted_order",
    "fd_check_x",
    "fd_check_xi",
    "fd_check_xi_frozen",
    "fd_check_xx",
    "fd_check_x_xi",
    "fd_check_concatenated",
]

EPS_SCHEDULE = tuple(2.0 ** -k for k in range(3, 9))
ORDER_WINDOW = (1.7, 2.3)
RATIO_WINDOW = (0.15, 0.40)
FP_FLOOR = 1e-10


def fitted_order(epsilons, remainders) -> float:
    """Least-squares slope of ``log remainder`` against ``log ε``."""
    e = np.log(np.asarray(epsilons, dtype=np.float64))
    r = np.log(np.asarray(remainders, dtype=np.float64))
    return float(np.polyfit(e, r, 1)[0])


@dataclass(frozen=True)
class ConvergenceReport:
    name: str
    epsilons: tuple
    remainders: tuple
    fitted_order: float
    passed: bool
    norm: str
    order_window: tuple = ORDER_WINDOW
    refinement_ratios: tuple = ()
    warnings: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = np.asarray(self.epsilons)
        if eps.size < 2 or np.any(np.diff(eps) >= 0):
            raise ValueError("epsilons must be strictly decreasing")
        if np.any(np.asarray(self.remainders) < 0):
            raise ValueError("remainders must be non-negative")

    @property
    def max_remainder(self) -> float:
        return float(np.max(self.remainders))

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.epsilons, self.remainders))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "norm": self.norm,
            "epsilons": list(self.epsilons),
            "remainders": list(self.remainders),
            "fitted_order": None if np.isnan(self.fitted_order) else self.fitted_order,
            "order_window": list(self.order_window),
            "refinement_ratios": list(self.refinement_ratios),
            "passed": bool(self.passed),
            "warnings": list(self.warnings),
            "meta": self.meta,
        }


def _assess(name, epsilons, remainders, norm, window, ratio_window, floor, meta) -> ConvergenceReport:
    eps = tuple(float(e) for e in epsilons)
    rem = np.asarray(remainders, dtype=np.float64)
    notes = []
    above = rem > floor
    ratios = tuple(float(rem[i + 1] / rem[i]) for i in range(len(rem) - 1)
                   if above[i] and above[i + 1])
    if not above.any():
        notes.append(f"all remainders below the floating-point floor {floor:g}")
        order, passed = float("nan"), True
    elif above.sum() < 2:
        notes.append("fewer than two remainders above the floor; order not fitted")
        order = float("nan")
        passed = bool(np.all(np.diff(rem) <= 0))
    else:
        order = fitted_order(np.asarray(eps)[above], rem[above])
        passed = window[0] <= order <= window[1]
        bad = [r for r in ratios if not ratio_window[0] <= r <= ratio_window[1]]
        if bad:
            notes.append(f"refinement ratios outside {list(ratio_window)}: {bad}")
            passed = False
    for n in notes:
        warnings.warn(f"{name}: {n}", RuntimeWarning, stacklevel=3)
    return ConvergenceReport(name, eps, tuple(float(r) for r in rem), order, bool(passed), norm,
                             tuple(window), ratios, tuple(notes), meta)


def _schedule(epsilons) -> tuple:
    eps = tuple(EPS_SCHEDULE if epsilons is None else (float(e) for e in epsilons))
    if any(e <= 0 for e in eps):
        raise ConfigurationError("finite-difference steps must be positive")
    return eps


def _point(v: Any, d: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if p.shape != (d,):
        raise ConfigurationError(f"expected a point of shape ({d},), got {p.shape}")
    return p


def _rv(v: Any) -> RandomVariable:
    return v if isinstance(v, RandomVariable) else RandomVariable(_values(v))


def fd_check_x(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    x: Any,
    xi: Any,
    y: Any,
    epsilons=None,
    window=ORDER_WINDOW,
    floor: float = FP_FLOOR,
) -> ConvergenceReport:
    """``‖X^{x+εy, ξ} − X^{x, ξ} − ε A^{y}‖_{H²}`` over the schedule."""
    eps = _schedule(epsilons)
    d = bundle.dim_d
    x, y = _point(x, d), _point(y, d)
    fwd = solve_mean_field(bundle, xi, paths)
    base = solve_frozen(bundle, x, fwd)
    a = tangent.solve_A(bundle, base, y).values
    rem = [hp_norm(solve_frozen(bundle, x + e * y, fwd).x_frozen.values - base.x_frozen.values - e * a, 2)
           for e in eps]
    return _assess("fd_x", eps, rem, "H2", window, RATIO_WINDOW, floor,
                   {"x": x.tolist(), "y": y.tolist()})


def fd_check_xi(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    xi: Any,
    eta: Any,
    epsilons=None,
    window=ORDER_WINDOW,
    floor: float = FP_FLOOR,
    start: str | None = None,
) -> ConvergenceReport:
    """``‖X^{ξ+εη} − X^{ξ} − ε(D_x X^{ξ,ξ}η + Y^{ξ,η})‖_{H¹}`` over the schedule."""
    eps = _schedule(epsilons)
    xi, eta = _rv(xi), _rv(eta)
    fwd = solve_mean_field(bundle, xi, paths)
    v = tangent.frechet_xi(bundle, fwd, eta, start).values
    base = fwd.x_meanfield.values
    rem = [hp_norm(solve_mean_field(bundle, xi + eta * e, paths).x_meanfield.values - base - e * v, 1)
           for e in eps]
    return _assess("fd_xi", eps, rem, "H1", window, RATIO_WINDOW, floor,
                   {"start": start or tangent.Y_START})


def fd_check_xi_frozen(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    x: Any,
    xi: Any,
    eta: Any,
    epsilons=None,
    window=ORDER_WINDOW,
    floor: float = FP_FLOOR,
    start: str | None = None,
) -> ConvergenceReport:
    """``‖X^{x, ξ+εη} − X^{x, ξ} − ε Y^{x,ξ,η}‖_{H²}`` over the schedule."""
    eps = _schedule(epsilons)
    x = _point(x, bundle.dim_d)
    xi, eta = _rv(xi), _rv(eta)
    fwd = solve_mean_field(bundle, xi, paths)
    base = solve_frozen(bundle, x, fwd)
    v = tangent.frechet_xi(bundle, fwd, eta, start)
    yx = tangent.solve_Y_x(bundle, base, eta, v, start).values
    rem = []
    for e in eps:
        shifted = solve_frozen(bundle, x, solve_mean_field(bundle, xi + eta * e, paths))
        rem.append(hp_norm(shifted.x_frozen.values - base.x_frozen.values - e * yx, 2))
    return _assess("fd_xi_frozen", eps, rem, "H2", window, RATIO_WINDOW, floor,
                   {"x": x.tolist(), "start": start or tangent.Y_START})


def fd_check_xx(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    x: Any,
    xi: Any,
    y: Any,
    z: Any,
    epsilons=None,
    window=ORDER_WINDOW,
    floor: float = FP_FLOOR,
) -> ConvergenceReport:
    """``‖A^{x+εy, z} − A^{x, z} − ε C^{y,z}‖_{H²}`` over the schedule."""
    eps = _schedule(epsilons)
    d = bundle.dim_d
    x, y, z = _point(x, d), _point(y, d), _point(z, d)
    fwd = solve_mean_field(bundle, xi, paths)
    base = solve_frozen(bundle, x, fwd)
    a_y = tangent.solve_A(bundle, base, y)
    a_z = tangent.solve_A(bundle, base, z)
    c = tangent.solve_C(bundle, base, a_y, a_z).values
    rem = []
    for e in eps:
        moved = solve_frozen(bundle, x + e * y, fwd)
        rem.append(hp_norm(tangent.solve_A(bundle, moved, z).values - a_z.values - e * c, 2))
    return _assess("fd_xx", eps, rem, "H2", window, RATIO_WINDOW, floor,
                   {"x": x.tolist(), "y": y.tolist(), "z": z.tolist()})


def fd_check_x_xi(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    x: Any,
    xi: Any,
    y: Any,
    eta: Any,
    sweep: str = "x",
    epsilons=None,
    window=ORDER_WINDOW,
    floor: float = FP_FLOOR,
    mixed: str = "dxdxi",
    start: str | None = None,
) -> ConvergenceReport:
    """Mixed derivative ``D^{y,η}`` against a difference of first derivatives.

    ``sweep="x"`` moves ``x`` along ``y`` and differences ``Y^{x,ξ,η}``;
    ``sweep="xi"`` moves ``ξ`` along ``η`` and differences ``A^{x,ξ,y}``.
    """
    if sweep not in ("x", "xi"):
        raise ConfigurationError(f"sweep must be 'x' or 'xi', got {sweep!r}")
    eps = _schedule(epsilons)
    d = bundle.dim_d
    x, y = _point(x, d), _point(y, d)
    xi, eta = _rv(xi), _rv(eta)
    fwd = solve_mean_field(bundle, xi, paths)
    base = solve_frozen(bundle, x, fwd)
    v = tangent.frechet_xi(bundle, fwd, eta, start)
    a_y = tangent.solve_A(bundle, base, y)
    y_x = tangent.solve_Y_x(bundle, base, eta, v, start)
    dd = tangent.solve_D(bundle, base, a_y, y_x, v, mixed).values
    rem = []
    for e in eps:
        if sweep == "x":
            moved = solve_frozen(bundle, x + e * y, fwd)
            diff = tangent.solve_Y_x(bundle, moved, eta, v, start).values - y_x.values
        else:
            moved = solve_frozen(bundle, x, solve_mean_field(bundle, xi + eta * e, paths))
            diff = tangent.solve_A(bundle, moved, y).values - a_y.values
        rem.append(hp_norm(diff - e * dd, 2))
    return _assess(f"fd_x_xi_{sweep}", eps, rem, "H2", window, RATIO_WINDOW, floor,
                   {"x": x.tolist(), "y": y.tolist(), "sweep": sweep, "mixed": mixed,
                    "start": start or tangent.Y_START})


def fd_check_concatenated(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    xi: Any,
    zeta: Any,
    epsilons=None,
    window=ORDER_WINDOW,
    floor: float = FP_FLOOR,
) -> ConvergenceReport:
    """``‖X^{ξ+εζ, ξ} − X^{ξ, ξ} − ε D_x X^{ξ,ξ}ζ‖_{H²}`` with the law held at ``ξ``."""
    eps = _schedule(epsilons)
    xi, zeta = _rv(xi), _rv(zeta)
    fwd = solve_mean_field(bundle, xi, paths)
    a = tangent.dx_concatenated(bundle, fwd, xi, zeta).values
    base = fwd.x_meanfield.values
    rem = [hp_norm(concatenate(bundle, xi + zeta * e, fwd).x_frozen.values - base - e * a, 2)
           for e in eps]
    return _assess("fd_concatenated", eps, rem, "H2", window, RATIO_WINDOW, floor, {})
