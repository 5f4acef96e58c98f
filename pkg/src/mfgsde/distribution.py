"""Sublinear distributions, the Lip₁ distance between them and lifted derivatives.

The sublinear distribution of a random variable ``ξ`` is the functional
``F_ξ(φ) = E[φ(ξ)]`` on Lipschitz test functions. Two distributions are
compared through ``d(F, G) = sup_{φ ∈ Lip₁} |F(φ) − G(φ)|``, and a function
of distributions is differentiated through its lifting ``f̂(ξ) = f(F_ξ)``
in deterministic directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .ensemble import RandomVariable, _values, lp_norm, sublinear_expectation
from .errors import DifferentiabilityError, DimensionError, NotLipschitzError
from .rng import stream

__all__ = [
    "GATEAUX_SCHEDULE",
    "SublinearDistribution",
    "PiecewiseLinear",
    "MinAffine",
    "Lip1Family",
    "MetricResult",
    "metric_d",
    "GateauxResult",
    "lifted_gateaux",
    "representative_independence",
    "distributional_derivative",
    "check_axioms",
]

GATEAUX_SCHEDULE = tuple(2.0 ** -k for k in range(4, 11))
LIP_SLACK = 1e-12


def _rv(x: Any) -> np.ndarray:
    v = _values(x)
    if v.ndim == 2:
        v = v[..., None]
    if v.ndim != 3:
        raise DimensionError(f"expected a random variable (S, N, d), got shape {v.shape}")
    return v


@dataclass(frozen=True)
class SublinearDistribution:
    """``φ ↦ E[φ(source)]`` for test functions mapping ``(..., d)`` to ``(...)``."""

    source: RandomVariable

    def __post_init__(self):
        if not isinstance(self.source, RandomVariable):
            object.__setattr__(self, "source", RandomVariable(_rv(self.source)))

    @property
    def dim_d(self) -> int:
        return self.source.dim_d

    def apply(self, phi: Callable[[np.ndarray], np.ndarray]) -> float:
        vals = np.asarray(phi(self.source.values), dtype=np.float64)
        return sublinear_expectation(np.broadcast_to(vals, self.source.values.shape[:2]))

    __call__ = apply


# --------------------------------------------------------------------------
# Lip₁ test functions


@dataclass(frozen=True)
class PiecewiseLinear:
    """1D function through ``(knots[i], values[i])``, constant outside the knots."""

    knots: np.ndarray
    slopes: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64)
        s = np.asarray(self.slopes, dtype=np.float64)
        if k.ndim != 1 or s.shape != (k.size - 1,):
            raise DimensionError("need K knots and K - 1 slopes")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "slopes", s)

    @property
    def values(self) -> np.ndarray:
        return self.offset + np.concatenate([[0.0], np.cumsum(self.slopes * np.diff(self.knots))])

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.slopes))) if self.slopes.size else 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        return np.interp(x, self.knots, self.values)

    def to_rows(self) -> list[tuple[float, float, float]]:
        """``(left knot, right knot, slope)`` per segment."""
        return [(float(a), float(b), float(s))
                for a, b, s in zip(self.knots[:-1], self.knots[1:], self.slopes)]


@dataclass(frozen=True)
class MinAffine:
    """``x ↦ min_j (a_jᵀ x + b_j)`` with ``‖a_j‖ ≤ 1``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if b.shape != (a.shape[0],):
            raise DimensionError("one offset per affine piece")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.linalg.norm(self.a, axis=1)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = x @ self.a[0] + self.b[0]
        for j in range(1, self.a.shape[0]):
            out = np.minimum(out, x @ self.a[j] + self.b[j])
        return out


class Lip1Family:
    """Candidate test functions with Lipschitz constant at most one.

    In 1D the family is all piecewise-linear functions on ``knots`` with
    slopes in ``[−1, 1]``; optimizing over it is a linear program. In higher
    dimension it is a finite dictionary of :class:`MinAffine` functions.
    """

    def __init__(self, dim_d: int, knots: np.ndarray | None = None,
                 dictionary: Sequence[MinAffine] = ()):
        self.dim_d = int(dim_d)
        self.knots = None if knots is None else np.unique(np.asarray(knots, dtype=np.float64))
        self.dictionary = tuple(dictionary)
        for phi in self.dictionary:
            if phi.lipschitz > 1.0 + LIP_SLACK:
                raise ValueError(f"dictionary member has Lipschitz constant {phi.lipschitz}")
        if self.dim_d == 1 and self.knots is None:
            raise ValueError("1D families need knots")

    @classmethod
    def for_pair(cls, F: SublinearDistribution, G: SublinearDistribution, padding: int = 16,
                 seed: int = 0, pieces: int = 64) -> "Lip1Family":
        if F.dim_d != G.dim_d:
            raise DimensionError("distributions live in different dimensions")
        xs, ys = F.source.values, G.source.values
        if F.dim_d == 1:
            pts = np.concatenate([xs.ravel(), ys.ravel()])
            lo, hi = float(pts.min()), float(pts.max())
            pad = np.linspace(lo - 1.0, hi + 1.0, padding) if padding else np.empty(0)
            return cls(1, np.concatenate([pts, pad]))
        return cls(F.dim_d, dictionary=_dictionary(xs, ys, pieces, seed))


def _dictionary(xs: np.ndarray, ys: np.ndarray, pieces: int, seed: int) -> list[MinAffine]:
    d = xs.shape[-1]
    rng = stream(seed, "distribution.dictionary")
    dirs = [np.eye(d)[k] for k in range(d)]
    dm = xs.reshape(-1, d).mean(axis=0) - ys.reshape(-1, d).mean(axis=0)
    if np.linalg.norm(dm) > 0:
        dirs.append(dm / np.linalg.norm(dm))
    while len(dirs) < pieces:
        v = rng.standard_normal(d)
        dirs.append(v / np.linalg.norm(v))
    out = []
    for v in dirs:
        out.append(MinAffine(v[None], [0.0]))
        out.append(MinAffine(-v[None], [0.0]))
    centers = np.concatenate([xs.reshape(-1, d), ys.reshape(-1, d)])
    for c in centers[rng.choice(len(centers), size=min(pieces, len(centers)), replace=False)]:
        # -|v·(x - c)| style tents along random directions
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        out.append(MinAffine(np.stack([v, -v]), [-v @ c, v @ c]))
    return out


@dataclass(frozen=True)
class MetricResult:
    """Lower bound on ``d(F, G)`` with the test function attaining it."""

    value: float
    certificate: Any
    exact_on_ensemble: bool
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def lower_bound(self) -> float:
        return self.value


def _tail_weights(values: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Per scenario, the mean of ``1{X > knots[j]}`` weighted by segment length."""
    s_count = values.shape[0]
    out = np.empty((s_count, knots.size - 1))
    seg = np.diff(knots)
    for s in range(s_count):
        v = np.sort(values[s].ravel())
        above = v.size - np.searchsorted(v, knots[:-1], side="right")
        out[s] = above / v.size * seg
    return out


def _lp_direction(wf: np.ndarray, wg: np.ndarray) -> tuple[float, np.ndarray]:
    """``max_slopes max_s wf[s]·slopes − max_s' wg[s']·slopes`` with slopes in ``[−1, 1]``."""
    k = wf.shape[1]
    best, best_slopes = -np.inf, np.zeros(k)
    bounds = [(-1.0, 1.0)] * k + [(None, None)]
    a_ub = np.hstack([wg, -np.ones((wg.shape[0], 1))])
    b_ub = np.zeros(wg.shape[0])
    for s in range(wf.shape[0]):
        c = -np.concatenate([wf[s], [-1.0]])
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status == 0 and -res.fun > best:
            best, best_slopes = -res.fun, res.x[:k]
    return float(best), np.clip(best_slopes, -1.0, 1.0)


def metric_d(F: SublinearDistribution, G: SublinearDistribution, family: Lip1Family | None = None,
             refine_rounds: int = 0) -> MetricResult:
    """Lower bound on ``d(F, G)``, reported with the attaining test function.

    In 1D the supremum over piecewise-linear functions on a knot grid that
    contains both supports is a linear program in the slopes, and its value
    equals the supremum over all of Lip₁ restricted to the ensemble points.
    ``refine_rounds`` adds midpoints between knots before solving; it only
    matters for user-supplied grids. The returned value is recomputed from the
    certificate with the actual functionals.
    """
    if F.dim_d != G.dim_d:
        raise DimensionError("distributions live in different dimensions")
    family = family or Lip1Family.for_pair(F, G)
    if family.dim_d != F.dim_d:
        raise DimensionError("family dimension does not match")
    if F.dim_d == 1:
        knots = family.knots
        for _ in range(int(refine_rounds)):
            knots = np.unique(np.concatenate([knots, 0.5 * (knots[1:] + knots[:-1])]))
        if knots.size < 2:
            return MetricResult(0.0, None, True, "lp", {"knots": int(knots.size)})
        wf = _tail_weights(F.source.values[..., 0], knots)
        wg = _tail_weights(G.source.values[..., 0], knots)
        up, s_up = _lp_direction(wf, wg)
        down, s_down = _lp_direction(wg, wf)
        slopes = s_up if up >= down else s_down
        phi = PiecewiseLinear(knots, slopes)
        value = abs(F.apply(phi) - G.apply(phi))
        covers = bool(np.all(np.isin(np.concatenate([F.source.values.ravel(),
                                                     G.source.values.ravel()]), knots)))
        return MetricResult(float(value), phi, covers, "lp",
                            {"knots": int(knots.size), "lp_value": max(up, down)})
    best, best_phi = 0.0, None
    for phi in family.dictionary:
        v = abs(F.apply(phi) - G.apply(phi))
        if v > best:
            best, best_phi = v, phi
    return MetricResult(float(best), best_phi, False, "dictionary",
                        {"dictionary_size": len(family.dictionary)})


# --------------------------------------------------------------------------
# axioms


def check_axioms(F: SublinearDistribution, phis: Sequence[Callable], psis: Sequence[Callable],
                 seed: int = 0, tol: float = 1e-12) -> dict:
    """Probe the five defining properties on pairs ``(φ_i, ψ_i)`` of Lip₁ functions.

    Constant preservation, monotonicity (against ``φ + |ψ|``), positive
    homogeneity, subadditivity, and boundedness in the form
    ``|F(φ) − φ(0)| ≤ E[|ξ|]`` for Lip₁ functions.
    """
    rng = stream(seed, "distribution.axioms")
    d = F.dim_d
    l1 = lp_norm(F.source, 1)
    worst = dict.fromkeys(("constant", "monotone", "homogeneous", "subadditive", "bounded"), 0.0)
    for phi, psi in zip(phis, psis):
        c = float(rng.uniform(-5, 5))
        lam = float(rng.uniform(0, 5))
        fphi, fpsi = F.apply(phi), F.apply(psi)
        worst["constant"] = max(worst["constant"],
                                abs(F.apply(lambda x, c=c: np.full(x.shape[:-1], c)) - c))
        upper = F.apply(lambda x: phi(x) + np.abs(psi(x)))
        worst["monotone"] = max(worst["monotone"], fphi - upper)
        worst["homogeneous"] = max(worst["homogeneous"],
                                   abs(F.apply(lambda x: lam * phi(x)) - lam * fphi))
        worst["subadditive"] = max(worst["subadditive"],
                                   F.apply(lambda x: phi(x) + psi(x)) - fphi - fpsi)
        phi0 = float(np.asarray(phi(np.zeros((1, 1, d)))).ravel()[0])
        worst["bounded"] = max(worst["bounded"], abs(fphi - phi0) - l1)
    scale = 1.0 + max(abs(l1), 1.0)
    passed = {k: v <= tol * scale for k, v in worst.items()}
    return {"worst": worst, "passed": passed, "all_passed": all(passed.values()),
            "pairs": len(phis)}


# --------------------------------------------------------------------------
# lifted derivatives


@dataclass(frozen=True)
class GateauxResult:
    value: float
    error: float
    epsilons: tuple
    estimates: tuple
    one_sided: tuple
    converged: bool

    def to_dict(self) -> dict:
        return {"value": self.value, "error": self.error, "epsilons": list(self.epsilons),
                "estimates": list(self.estimates), "one_sided": list(self.one_sided),
                "converged": self.converged}


def _shift(xi: np.ndarray, x: np.ndarray, e: float) -> RandomVariable:
    return RandomVariable(xi + e * x)


def lifted_gateaux(f_hat: Callable[[RandomVariable], float], xi: Any, direction: Any,
                   epsilons=None, rtol: float = 1e-6, atol: float = 1e-8,
                   kink_tol: float = 1e-4) -> GateauxResult:
    """Gateaux derivative of ``f̂`` at ``ξ`` in the deterministic direction ``x``.

    Central differences over the schedule are Richardson-extrapolated; the
    error estimate is the change between the last two extrapolants. One-sided
    difference quotients, also extrapolated, must agree: a persistent gap
    means a kink, for example two scenarios tied in a maximum.

    Raises
    ------
    DifferentiabilityError
        If the extrapolants do not settle or the one-sided slopes disagree.
    """
    v = _rv(xi)
    x = np.atleast_1d(np.asarray(direction, dtype=np.float64))
    if x.shape != (v.shape[-1],):
        raise DimensionError(f"direction must have shape ({v.shape[-1]},)")
    eps = tuple(GATEAUX_SCHEDULE if epsilons is None else epsilons)
    f0 = float(f_hat(RandomVariable(v)))
    fp = [float(f_hat(_shift(v, x, e))) for e in eps]
    fm = [float(f_hat(_shift(v, x, -e))) for e in eps]
    central = np.array([(a - b) / (2 * e) for a, b, e in zip(fp, fm, eps)])
    fwd = np.array([(a - f0) / e for a, e in zip(fp, eps)])
    bwd = np.array([(f0 - b) / e for b, e in zip(fm, eps)])
    ratio = eps[0] / eps[1] if len(eps) > 1 else 2.0
    r2 = ratio ** 2
    rich = (r2 * central[1:] - central[:-1]) / (r2 - 1) if len(eps) > 1 else central
    rf = (ratio * fwd[1:] - fwd[:-1]) / (ratio - 1) if len(eps) > 1 else fwd
    rb = (ratio * bwd[1:] - bwd[:-1]) / (ratio - 1) if len(eps) > 1 else bwd
    value = float(rich[-1])
    err = float(abs(rich[-1] - rich[-2])) if rich.size > 1 else float("inf")
    gap = float(abs(rf[-1] - rb[-1]))
    settled = err <= atol + rtol * abs(value)
    smooth = gap <= kink_tol * (1.0 + abs(value))
    result = GateauxResult(value, err, eps, tuple(float(r) for r in rich),
                           (float(rf[-1]), float(rb[-1])), bool(settled and smooth))
    if not result.converged:
        why = "one-sided slopes disagree (kink or tied scenarios)" if not smooth else \
              "extrapolated differences did not settle"
        raise DifferentiabilityError(f"lifting not differentiable in direction {x.tolist()}: {why}",
                                     result.to_dict())
    return result


def _permute(v: np.ndarray, permutation, seed: int) -> np.ndarray:
    s, n = v.shape[:2]
    if isinstance(permutation, str):
        if permutation == "identity":
            return v.copy()
        if permutation == "reverse":
            return v[:, ::-1].copy()
        if permutation == "random":
            rng = stream(seed, "distribution.permutation")
            return np.stack([v[k, rng.permutation(n)] for k in range(s)])
        raise ValueError(f"unknown permutation {permutation!r}")
    if callable(permutation):
        return np.asarray(permutation(v))
    idx = np.asarray(permutation, dtype=np.int64)
    if sorted(idx.tolist()) != list(range(n)):
        raise ValueError("permutation must be a rearrangement of the path indices")
    return v[:, idx].copy()


def representative_independence(f_hat: Callable[[RandomVariable], float], xi: Any,
                                permutation="reverse", directions: Sequence | None = None,
                                tol: float = 1e-8, seed: int = 0, **gateaux_kw) -> dict:
    """Compare Gateaux derivatives at ``ξ`` and at a path permutation of ``ξ``.

    Permuting paths within every scenario leaves each ``E[φ(ξ)]`` unchanged,
    so a lifting of a function of the distribution must give equal
    derivatives. Functions that read individual paths generally do not.
    """
    v = _rv(xi)
    eta = _permute(v, permutation, seed)
    d = v.shape[-1]
    directions = [np.eye(d)[k] for k in range(d)] if directions is None else directions
    rows, passed = [], True
    for x in directions:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        try:
            a = lifted_gateaux(f_hat, v, x, **gateaux_kw).value
            b = lifted_gateaux(f_hat, eta, x, **gateaux_kw).value
            diff = abs(a - b)
            ok = diff <= tol
            rows.append({"direction": x.tolist(), "at_xi": a, "at_eta": b, "difference": diff,
                         "passed": ok})
        except DifferentiabilityError as exc:
            ok = False
            rows.append({"direction": x.tolist(), "error": str(exc), "passed": False})
        passed = passed and ok
    label = permutation if isinstance(permutation, str) else "custom"
    return {"permutation": label, "tolerance": tol, "directions": rows, "passed": bool(passed)}


def _lipschitz_probe(kernel: Callable[[np.ndarray], float], support: np.ndarray, vals: np.ndarray,
                     probes: int, seed: int, growth: float, bound: float | None) -> dict:
    """Difference quotients of the kernel on shrinking steps around its steepest points."""
    rng = stream(seed, "distribution.lipschitz")
    n, d = support.shape
    if n > 1 and d == 1:
        order = np.argsort(support[:, 0])
        gaps = np.diff(support[order, 0])
        slopes = np.abs(np.diff(vals[order])) / gaps
        steep = order[np.argsort(slopes)[::-1][: max(1, probes // 2)]]
        pair_est = float(np.max(slopes))
    else:
        steep = np.empty(0, dtype=np.int64)
        pair_est = 0.0
    extra = rng.choice(n, size=min(n, max(1, probes - steep.size)), replace=False)
    centers = support[np.unique(np.concatenate([steep, extra]))]
    steps = [2.0 ** -k for k in range(2, 13)]
    dirs = rng.standard_normal((len(centers), d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    base = [float(kernel(c)) for c in centers]
    ratios = []
    for h in steps:
        r = 0.0
        for c, u, k0 in zip(centers, dirs, base):
            r = max(r, abs(float(kernel(c + h * u)) - k0) / h, abs(float(kernel(c - h * u)) - k0) / h)
        ratios.append(r)
    coarse = max(ratios[: len(ratios) // 2])
    estimate = max(ratios + [pair_est])
    ok = bool(np.isfinite(ratios[-1]) and ratios[-1] <= growth * coarse + 1e-9)
    if bound is not None:
        ok = ok and estimate <= bound
    return {"steps": steps, "ratios": ratios, "pair_estimate": pair_est, "estimate": estimate,
            "bound": bound, "passed": ok}


def distributional_derivative(f_hat: Callable[[RandomVariable], float], xi: Any, eta: Any,
                              kernel: Callable[[np.ndarray], float] | None = None,
                              probes: int = 16, growth: float = 2.0, seed: int = 0,
                              lipschitz_bound: float | None = None, **gateaux_kw) -> float:
    """``E[∂f̂(ξ; x)|_{x=η}]`` with the kernel evaluated on the support of ``η``.

    ``kernel`` is an optional closed form of ``x ↦ ∂f̂(ξ; x)``; otherwise each
    support point costs one :func:`lifted_gateaux` call. The kernel must be
    Lipschitz: difference quotients on shrinking steps around the steepest
    support points may not grow by more than ``growth``, and none may exceed
    ``lipschitz_bound`` when one is given.

    Raises
    ------
    NotLipschitzError
        If the Lipschitz probe fails.
    """
    v = _rv(xi)
    e = _rv(eta)
    if e.shape[-1] != v.shape[-1]:
        raise DimensionError("ξ and η have different dimensions")
    if kernel is None:
        def kernel(x):
            return lifted_gateaux(f_hat, v, np.atleast_1d(x), **gateaux_kw).value
    flat = e.reshape(-1, e.shape[-1])
    support, inverse = np.unique(flat, axis=0, return_inverse=True)
    vals = np.array([float(kernel(p)) for p in support])
    probe = _lipschitz_probe(kernel, support, vals, probes, seed, growth, lipschitz_bound)
    if not probe["passed"]:
        raise NotLipschitzError("derivative kernel failed the Lipschitz probe", probe)
    per_path = vals[np.asarray(inverse).ravel()].reshape(e.shape[:2])
    return sublinear_expectation(per_path)
