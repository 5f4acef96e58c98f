"""Ratio audits for the moment bounds of solutions, differences and tangents.

Each audit evaluates a left-hand side ``E[max_k |Z_k|^p]`` and the data term
on the right (for example ``|x − y|^p + ‖ξ − η‖_{L²}^p``) on a set of probes,
and compares their ratio with an explicit constant built from the coefficient
bounds.

Constants
---------
Every audited process solves a linear or Lipschitz recursion

    Z = z0 + ∫ F_b ds + ∫ F_h d⟨B⟩ + ∫ F_g dB,
    |F_f| ≤ L_f (|Z| + c ‖Z‖_{L²}) + ρ_f    (per component).

With ``v(s)`` the ``L^p`` norm of ``max_{r ≤ s} |Z_r|``, Minkowski's
inequality and the Burkholder-Davis-Gundy inequality give

    v ≤ a + R + β ∫ v + γ (∫ v²)^{1/2},
    β = (m_b L_b + m_h L_h)(1 + c),  γ = m_g L_g (1 + c),
    R = T (m_b r_b + m_h r_h) + m_g √T r_g,

with ``a = ‖z0‖_p``, ``r_f ≥ sup_s ‖ρ_f(s)‖_p`` and dimension factors
``m_b = √d``, ``m_h = n √d q_F``, ``m_g = C_p^{1/p} √(d n) σ̄``. Squaring and
Grönwall's inequality yield ``v(T) ≤ √3 (a + R) exp(3/2 (β² T + γ²) T)``.
The same argument with left-point sums covers the Euler recursions. The
source bounds ``r_f`` come from the bounds of lower-level processes, with
Hölder's inequality for products, so the constants are chained rather than
fitted. The BDG constant used here is the classical one,
``(p/(p−1))^p (p(p−1)/2)^{p/2}``.

Each probe gets its own bound ``B_i``; the reported constant is
``C_i = B_i / RHS_i``, which depends on the probe data only through moment
ratios such as ``‖ζ‖_{L⁴} / ‖ζ‖_{L²}``. A probe passes when its ratio is at
most ``safety × C_i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import tangent
from ..coefficients import NAMES, CoefficientBundle
from ..ensemble import RandomVariable, hp_norm, lp_norm
from ..errors import ConfigurationError
from ..gbrownian import GBrownianPaths
from ..rng import stream
from ..solver import solve_frozen, solve_mean_field

__all__ = [
    "LEMMAS",
    "SAFETY_FACTOR",
    "DENOMINATOR_FLOOR",
    "AuditProbes",
    "ProbeResult",
    "RatioAudit",
    "BoundModel",
    "bdg_constant",
    "ratio_audit",
    "audit_all",
]

log = logging.getLogger(__name__)

SAFETY_FACTOR = 4.0
DENOMINATOR_FLOOR = 1e-14

# identifier -> default exponent
LEMMAS = {
    "H2-bound-xi": 2,
    "H2-bound": 2,
    "xi-eta-2-bound": 2,
    "xxi-yeta-p-bound": 2,
    "Dx-p-bound": 2,
    "Dx-Dx": 2,
    "Y-2-bound": 2,
    "Y-p-bound": 2,
    "Y-Y-p-bound": 2,
    "C-bound": 2,
    "D-bound": 2,
}


def bdg_constant(p: float) -> float:
    """Doob's maximal inequality combined with the Itô-formula moment bound."""
    p = float(p)
    if p < 2:
        raise ValueError("the constant is used for p >= 2 only")
    return (p / (p - 1.0)) ** p * (p * (p - 1.0) / 2.0) ** (p / 2.0)


class BoundModel:
    """Scalar Lipschitz data of a bundle on a grid, and the generic moment bound."""

    def __init__(self, bundle: CoefficientBundle, paths: GBrownianPaths):
        ens = paths.ensemble
        grid = ens.grid
        self.T = grid.horizon
        d, n = bundle.dim_d, bundle.dim_n
        self.lip0 = dict.fromkeys(NAMES, 0.0)
        self.lip1 = dict.fromkeys(NAMES, 0.0)
        self.k0 = dict.fromkeys(NAMES, 0.0)
        zero = np.zeros((ens.n_scenarios, ens.n_paths, d))
        for k in range(grid.steps):
            s = grid.node(k)
            cb = bundle.component_bounds(s)
            for f in NAMES:
                self.lip0[f] = max(self.lip0[f], float(np.max(cb["lip0"][f])))
                self.lip1[f] = max(self.lip1[f], float(np.max(cb["lip1"][f])))
                self.k0[f] = max(self.k0[f], float(np.max(np.abs(bundle.value(f, s, zero, zero)))))
        sigma = ens.sigma
        self.q_frob = sigma.max_qv_frobenius
        self.sigma_bar = math.sqrt(sigma.max_qv_eigenvalue)
        self.d, self.n = d, n

    def factors(self, p: float) -> dict[str, float]:
        d, n = self.d, self.n
        return {
            "b": math.sqrt(d),
            "h": n * math.sqrt(d) * self.q_frob,
            "g": bdg_constant(p) ** (1.0 / p) * math.sqrt(d * n) * self.sigma_bar,
        }

    def norm(self, p: float, a: float, lip: dict, r: dict | float = 0.0, c: float = 0.0) -> float:
        """Bound on ``‖max_k |Z_k|‖_p`` for the recursion described in the module docstring."""
        m = self.factors(max(p, 2.0))
        if not isinstance(r, dict):
            r = dict.fromkeys(NAMES, float(r))
        T = self.T
        beta = (m["b"] * lip["b"] + m["h"] * lip["h"]) * (1.0 + c)
        gamma = m["g"] * lip["g"] * (1.0 + c)
        R = T * (m["b"] * r["b"] + m["h"] * r["h"]) + m["g"] * math.sqrt(T) * r["g"]
        return math.sqrt(3.0) * (a + R) * math.exp(1.5 * (beta ** 2 * T + gamma ** 2) * T)


@dataclass(frozen=True)
class AuditProbes:
    """Random probe data for the audits.

    Points are uniform in ``[-x_range, x_range]^d``; random variables are
    ``m + xi_scale · N(0, 1)`` path by path with a random offset ``m`` drawn
    from the point range.
    """

    count: int = 10
    x_range: float = 1.0
    xi_scale: float = 1.0
    seed: int = 0

    def draw(self, paths: GBrownianPaths, d: int, lemma: str) -> list[dict]:
        rng = stream(self.seed, f"verify.audit.{lemma}")
        ens = paths.ensemble
        shape = (ens.n_scenarios, ens.n_paths, d)
        out = []
        for _ in range(self.count):
            pts = {k: rng.uniform(-self.x_range, self.x_range, d) for k in ("x", "y", "z")}
            rvs = {k: RandomVariable(rng.uniform(-self.x_range, self.x_range, d)
                                     + self.xi_scale * rng.standard_normal(shape))
                   for k in ("xi", "eta", "zeta")}
            out.append({**pts, **rvs})
        return out

    def to_dict(self) -> dict:
        return {"count": self.count, "x_range": self.x_range, "xi_scale": self.xi_scale,
                "seed": self.seed}


@dataclass(frozen=True)
class ProbeResult:
    numerator: float
    denominator: float
    ratio: float
    constant: float
    excluded: bool = False

    def to_dict(self) -> dict:
        return {"numerator": self.numerator, "denominator": self.denominator,
                "ratio": self.ratio, "constant": self.constant, "excluded": self.excluded}


def _margin(ratio: float, allowed: float) -> float:
    if allowed > 0:
        return ratio / allowed
    return 0.0 if ratio == 0 else float("inf")


@dataclass(frozen=True)
class RatioAudit:
    lemma_id: str
    p: float
    probes: tuple
    theoretical_constant: float
    safety_factor: float
    passed: bool
    notes: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        r = [q.ratio for q in self.probes if not q.excluded]
        return max(r) if r else 0.0

    @property
    def worst_margin(self) -> float:
        """Largest ``ratio / (safety × constant)`` over included probes."""
        r = [_margin(q.ratio, self.safety_factor * q.constant) for q in self.probes if not q.excluded]
        return max(r) if r else 0.0

    def to_dict(self) -> dict:
        return {
            "lemma_id": self.lemma_id,
            "p": self.p,
            "theoretical_constant": self.theoretical_constant,
            "safety_factor": self.safety_factor,
            "max_ratio": self.max_ratio,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "probes": [q.to_dict() for q in self.probes],
            "notes": list(self.notes),
            "meta": self.meta,
        }


# --------------------------------------------------------------------------
# per-lemma evaluation: each returns (lhs, rhs, bound)


class _Context:
    def __init__(self, bundle, paths, start):
        self.bundle, self.paths = bundle, paths
        self.start = start or tangent.Y_START
        self.model = BoundModel(bundle, paths)

    # solves
    def fwd(self, xi):
        return solve_mean_field(self.bundle, xi, self.paths)

    def frozen(self, x, fwd):
        return solve_frozen(self.bundle, x, fwd)

    # bounds on ‖max |.|‖_p
    def n_mf(self, p, xi):
        m = self.model
        return m.norm(p, lp_norm(xi, p), m.lip0, m.k0, c=1.0)

    def n_frozen(self, p, x, xi):
        m = self.model
        r = {f: m.lip0[f] * self.n_mf(2, xi) + m.k0[f] for f in NAMES}
        return m.norm(p, float(np.linalg.norm(x)), m.lip0, r)

    def n_dmf(self, p, dxi):
        m = self.model
        return m.norm(p, lp_norm(dxi, p), m.lip0, c=1.0)

    def n_dfrozen(self, p, dx, dxi):
        m = self.model
        r = {f: m.lip0[f] * self.n_dmf(2, dxi) for f in NAMES}
        return m.norm(p, float(np.linalg.norm(dx)), m.lip0, r)

    def n_a(self, p, y_norm):
        return self.model.norm(p, y_norm, self.model.lip0)

    def y0_norm(self, p, eta):
        return lp_norm(eta, p) if self.start == "eta" else 0.0

    def n_y_xi(self, p, eta):
        m = self.model
        r = {f: m.lip0[f] * self.n_a(2, lp_norm(eta, 2)) for f in NAMES}
        return m.norm(p, self.y0_norm(p, eta), m.lip0, r, c=1.0)

    def n_v(self, p, eta):
        # D_xi X solves dV = D_x f V + D_xi f V with V_0 = eta
        return self.model.norm(p, lp_norm(eta, p), self.model.lip0, c=1.0)

    def n_y_x(self, p, eta):
        m = self.model
        r = {f: m.lip0[f] * self.n_v(2, eta) for f in NAMES}
        return m.norm(p, self.y0_norm(p, eta), m.lip0, r)

    def n_dv(self, p, eta, xi, other):
        """Difference of D_xi X along two mean-field solutions, same direction."""
        m = self.model
        d_xi = xi - other
        n_dx2p, n_dx2 = self.n_dmf(2 * p, d_xi), self.n_dmf(2, d_xi)
        v2p, vp, v2 = self.n_v(2 * p, eta), self.n_v(p, eta), self.n_v(2, eta)
        r = {f: m.lip1[f] * (v2p * n_dx2p + vp * n_dx2)
             + m.lip1[f] * v2 * (self.n_dmf(p, d_xi) + n_dx2) for f in NAMES}
        return m.norm(p, 0.0, m.lip0, r, c=1.0)


def _lemma_h2_xi(ctx, pr, p):
    xi = pr["xi"]
    lhs = hp_norm(ctx.fwd(xi).x_meanfield.values, p) ** p
    rhs = 1.0 + lp_norm(xi, 2) ** p
    return lhs, rhs, ctx.n_mf(p, xi) ** p


def _lemma_h2(ctx, pr, p):
    x, xi = pr["x"], pr["xi"]
    lhs = hp_norm(ctx.frozen(x, ctx.fwd(xi)).x_frozen.values, p) ** p
    rhs = 1.0 + float(np.linalg.norm(x)) ** p + lp_norm(xi, 2) ** p
    return lhs, rhs, ctx.n_frozen(p, x, xi) ** p


def _lemma_xi_eta(ctx, pr, p):
    xi, eta = pr["xi"], pr["eta"]
    lhs = hp_norm(ctx.fwd(xi).x_meanfield.values - ctx.fwd(eta).x_meanfield.values, p) ** p
    rhs = lp_norm(xi - eta, 2) ** p
    return lhs, rhs, ctx.n_dmf(p, xi - eta) ** p


def _lemma_xxi_yeta(ctx, pr, p):
    x, y, xi, eta = pr["x"], pr["y"], pr["xi"], pr["eta"]
    a = ctx.frozen(x, ctx.fwd(xi)).x_frozen.values
    b = ctx.frozen(y, ctx.fwd(eta)).x_frozen.values
    lhs = hp_norm(a - b, p) ** p
    rhs = float(np.linalg.norm(x - y)) ** p + lp_norm(xi - eta, 2) ** p
    return lhs, rhs, ctx.n_dfrozen(p, x - y, xi - eta) ** p


def _lemma_dx_p(ctx, pr, p):
    x, y, xi = pr["x"], pr["y"], pr["xi"]
    a = tangent.solve_A(ctx.bundle, ctx.frozen(x, ctx.fwd(xi)), y)
    yn = float(np.linalg.norm(y))
    return hp_norm(a.values, p) ** p, yn ** p, ctx.n_a(p, yn) ** p


def _lemma_dx_dx(ctx, pr, p):
    x, y, z, xi, eta = pr["x"], pr["y"], pr["z"], pr["xi"], pr["eta"]
    b = ctx.bundle
    a1 = tangent.solve_A(b, ctx.frozen(x, ctx.fwd(xi)), z).values
    a2 = tangent.solve_A(b, ctx.frozen(y, ctx.fwd(eta)), z).values
    zn, dx = float(np.linalg.norm(z)), float(np.linalg.norm(x - y))
    dxi = xi - eta
    lhs = hp_norm(a1 - a2, p) ** p
    rhs = zn ** p * (dx ** p + lp_norm(dxi, 2) ** p)
    m = ctx.model
    src = ctx.n_a(2 * p, zn) * ctx.n_dfrozen(2 * p, x - y, dxi) + ctx.n_a(p, zn) * ctx.n_dmf(2, dxi)
    r = {f: m.lip1[f] * src for f in NAMES}
    return lhs, rhs, m.norm(p, 0.0, m.lip0, r) ** p


def _lemma_y_2(ctx, pr, p):
    xi, eta = pr["xi"], pr["eta"]
    v = tangent.frechet_xi(ctx.bundle, ctx.fwd(xi), eta, ctx.start)
    y = v.directions["parts"][1]
    return hp_norm(y.values, p) ** p, lp_norm(eta, 2) ** p, ctx.n_y_xi(p, eta) ** p


def _lemma_y_p(ctx, pr, p):
    x, xi, eta = pr["x"], pr["xi"], pr["eta"]
    fwd = ctx.fwd(xi)
    v = tangent.frechet_xi(ctx.bundle, fwd, eta, ctx.start)
    yx = tangent.solve_Y_x(ctx.bundle, ctx.frozen(x, fwd), eta, v, ctx.start)
    rhs = lp_norm(eta, p) ** p + lp_norm(eta, 2) ** p
    return hp_norm(yx.values, p) ** p, rhs, ctx.n_y_x(p, eta) ** p


def _lemma_y_y(ctx, pr, p):
    x, y, xi, eta, zeta = pr["x"], pr["y"], pr["xi"], pr["eta"], pr["zeta"]
    b = ctx.bundle
    f1, f2 = ctx.fwd(xi), ctx.fwd(eta)
    v1 = tangent.frechet_xi(b, f1, zeta, ctx.start)
    v2 = tangent.frechet_xi(b, f2, zeta, ctx.start)
    y1 = tangent.solve_Y_x(b, ctx.frozen(x, f1), zeta, v1, ctx.start).values
    y2 = tangent.solve_Y_x(b, ctx.frozen(y, f2), zeta, v2, ctx.start).values
    dx, dxi = float(np.linalg.norm(x - y)), xi - eta
    lhs = hp_norm(y1 - y2, p) ** p
    rhs = lp_norm(zeta, 2) ** p * (dx ** p + lp_norm(dxi, 2) ** p)
    m = ctx.model
    n_dmf2 = ctx.n_dmf(2, dxi)
    r = {}
    for f in NAMES:
        t2 = m.lip1[f] * (ctx.n_y_x(2 * p, zeta) * ctx.n_dfrozen(2 * p, x - y, dxi)
                          + ctx.n_y_x(p, zeta) * n_dmf2)
        t3 = m.lip0[f] * ctx.n_dv(2, zeta, xi, eta)
        t4 = m.lip1[f] * ctx.n_v(2, zeta) * (ctx.n_dfrozen(p, x - y, dxi) + n_dmf2)
        r[f] = t2 + t3 + t4
    return lhs, rhs, m.norm(p, 0.0, m.lip0, r) ** p


def _lemma_c(ctx, pr, p):
    x, y, z, xi = pr["x"], pr["y"], pr["z"], pr["xi"]
    b = ctx.bundle
    fr = ctx.frozen(x, ctx.fwd(xi))
    c = tangent.solve_C(b, fr, tangent.solve_A(b, fr, y), tangent.solve_A(b, fr, z))
    yn, zn = float(np.linalg.norm(y)), float(np.linalg.norm(z))
    m = ctx.model
    r = {f: m.lip1[f] * ctx.n_a(2 * p, yn) * ctx.n_a(2 * p, zn) for f in NAMES}
    return hp_norm(c.values, p) ** p, (yn * zn) ** p, m.norm(p, 0.0, m.lip0, r) ** p


def _lemma_d(ctx, pr, p):
    x, y, xi, eta = pr["x"], pr["y"], pr["xi"], pr["eta"]
    b = ctx.bundle
    fwd = ctx.fwd(xi)
    fr = ctx.frozen(x, fwd)
    v = tangent.frechet_xi(b, fwd, eta, ctx.start)
    a_y = tangent.solve_A(b, fr, y)
    y_x = tangent.solve_Y_x(b, fr, eta, v, ctx.start)
    dd = tangent.solve_D(b, fr, a_y, y_x, v)
    yn = float(np.linalg.norm(y))
    m = ctx.model
    src = ctx.n_a(2 * p, yn) * ctx.n_y_x(2 * p, eta) + ctx.n_v(2, eta) * ctx.n_a(p, yn)
    r = {f: m.lip1[f] * src for f in NAMES}
    rhs = yn ** p * lp_norm(eta, 2) ** p
    return hp_norm(dd.values, p) ** p, rhs, m.norm(p, 0.0, m.lip0, r) ** p


_EVALUATORS: dict[str, Callable] = {
    "H2-bound-xi": _lemma_h2_xi,
    "H2-bound": _lemma_h2,
    "xi-eta-2-bound": _lemma_xi_eta,
    "xxi-yeta-p-bound": _lemma_xxi_yeta,
    "Dx-p-bound": _lemma_dx_p,
    "Dx-Dx": _lemma_dx_dx,
    "Y-2-bound": _lemma_y_2,
    "Y-p-bound": _lemma_y_p,
    "Y-Y-p-bound": _lemma_y_y,
    "C-bound": _lemma_c,
    "D-bound": _lemma_d,
}

_NEEDS = {
    "Dx-p-bound": ("dx",), "Dx-Dx": ("dx",),
    "Y-2-bound": ("dx", "dxi"), "Y-p-bound": ("dx", "dxi"), "Y-Y-p-bound": ("dx", "dxi"),
    "C-bound": ("dx", "dxx"), "D-bound": ("dx", "dxi", "dxx", "dxdxi"),
}


def ratio_audit(
    lemma_id: str,
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    probes: AuditProbes | list[dict] | None = None,
    p: float | None = None,
    safety_factor: float = SAFETY_FACTOR,
    start: str | None = None,
) -> RatioAudit:
    """Audit one bound on a probe set.

    ``probes`` is an :class:`AuditProbes` spec or an explicit list of probe
    dictionaries with keys ``x, y, z`` (points) and ``xi, eta, zeta``
    (random variables).
    """
    if lemma_id not in _EVALUATORS:
        raise ConfigurationError(f"unknown lemma id {lemma_id!r}; known: {sorted(_EVALUATORS)}")
    p = float(LEMMAS[lemma_id] if p is None else p)
    if p < 2:
        raise ConfigurationError("audits need p >= 2")
    bundle.require(*_NEEDS.get(lemma_id, ()))
    spec = probes if isinstance(probes, AuditProbes) else AuditProbes()
    probe_list = probes if isinstance(probes, list) else spec.draw(paths, bundle.dim_d, lemma_id)
    ctx = _Context(bundle, paths, start)
    results, notes = [], []
    for i, pr in enumerate(probe_list):
        pr = {k: (RandomVariable(v) if k in ("xi", "eta", "zeta") and not isinstance(v, RandomVariable)
                  else np.atleast_1d(np.asarray(v, dtype=np.float64)) if k in ("x", "y", "z") else v)
              for k, v in pr.items()}
        lhs, rhs, bound = _EVALUATORS[lemma_id](ctx, pr, p)
        if rhs < DENOMINATOR_FLOOR:
            msg = f"probe {i} excluded: data term {rhs:.3g} below {DENOMINATOR_FLOOR:g}"
            log.info("%s: %s", lemma_id, msg)
            notes.append(msg)
            results.append(ProbeResult(lhs, rhs, float("nan"), float("nan"), True))
            continue
        results.append(ProbeResult(lhs, rhs, lhs / rhs, bound / rhs))
    included = [r for r in results if not r.excluded]
    passed = all(r.ratio <= safety_factor * r.constant for r in included)
    const = max((r.constant for r in included), default=float("nan"))
    if not included:
        notes.append("all probes excluded")
    meta = {"start": ctx.start, "probes": spec.to_dict() if not isinstance(probes, list) else "explicit"}
    return RatioAudit(lemma_id, p, tuple(results), const, safety_factor, bool(passed), tuple(notes), meta)


def audit_all(
    bundle: CoefficientBundle,
    paths: GBrownianPaths,
    probes: AuditProbes | None = None,
    safety_factor: float = SAFETY_FACTOR,
    extra_exponents: dict | None = None,
) -> list[RatioAudit]:
    """All eleven audits at their default exponents, plus any ``{lemma: [p, ...]}`` extras."""
    extra = {"xxi-yeta-p-bound": [4]} if extra_exponents is None else extra_exponents
    out = []
    for lemma, p in LEMMAS.items():
        for q in [p] + list(extra.get(lemma, [])):
            out.append(ratio_audit(lemma, bundle, paths, probes, q, safety_factor))
    return out
