"""G-Brownian paths, quadratic variation and the two elementary integrals.

Under the control θ of scenario ``s`` the increment of ``B`` on step ``k`` is
``θ_k ΔW_k`` and the increment of the quadratic variation is ``θ_k θ_kᵀ δ``.
The quadratic variation is computed from the control directly, so it carries
no Monte-Carlo noise.
"""

from __future__ import annotations

from functools import cached_property
from typing import Any

import numpy as np

from .ensemble import ProcessTensor, ScenarioEnsemble, _values
from .errors import DimensionError

__all__ = ["GBrownianPaths", "synthesize", "ito_integral", "qv_integral", "apply_volatility"]


def apply_volatility(theta: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``θ dw`` over the trailing axes.

    The sum over the inner index runs in a fixed order so that a single step
    and the full tensor give bit-identical values.
    """
    n = dw.shape[-1]
    out = theta[..., :, 0] * dw[..., None, 0]
    for j in range(1, n):
        out = out + theta[..., :, j] * dw[..., None, j]
    return out


class GBrownianPaths:
    """Increments of ``B`` and ``⟨B⟩`` for every scenario of an ensemble.

    ``b`` and ``db`` are materialized lazily; solvers use :meth:`db_step`
    and :attr:`dqv`, which need no ``(S, N, M)`` storage.
    """

    def __init__(self, ensemble: ScenarioEnsemble):
        self.ensemble = ensemble
        theta = ensemble.control_array  # (S, M, n, n)
        self.theta = theta
        rates = np.einsum("smij,smkj->smik", theta, theta)
        self.qv_rates = rates
        self.dqv = rates * ensemble.grid.delta  # (S, M, n, n)
        qv = np.zeros((theta.shape[0], theta.shape[1] + 1) + theta.shape[2:])
        np.cumsum(self.dqv, axis=1, out=qv[:, 1:])
        self.qv = qv
        for a in (self.theta, self.qv_rates, self.dqv, self.qv):
            a.setflags(write=False)

    @property
    def dim_n(self) -> int:
        return self.ensemble.dim_n

    def db_step(self, k: int) -> np.ndarray:
        """Increment of ``B`` on step ``k``, shape ``(S, N, n)``."""
        dw = self.ensemble.wiener_increments[:, k]  # (N, n)
        return apply_volatility(self.theta[:, k][:, None], dw[None])

    @cached_property
    def db(self) -> np.ndarray:
        """All increments of ``B``, shape ``(S, N, M, n)``."""
        dw = self.ensemble.wiener_increments  # (N, M, n)
        out = apply_volatility(self.theta[:, None], dw[None])
        out.setflags(write=False)
        return out

    @cached_property
    def b(self) -> ProcessTensor:
        s, n_paths, m, n = self.db.shape
        out = np.zeros((s, n_paths, m + 1, n))
        np.cumsum(self.db, axis=2, out=out[:, :, 1:])
        return ProcessTensor(out)

    def qv_process(self, i: int, j: int) -> ProcessTensor:
        """``⟨B^i, B^j⟩`` broadcast over paths, shape ``(S, N, M + 1, 1)``."""
        self._check_coord(i)
        self._check_coord(j)
        q = self.qv[:, None, :, i, j, None]
        return ProcessTensor(np.broadcast_to(q, (q.shape[0], self.ensemble.n_paths) + q.shape[2:]))

    def _check_coord(self, i: int) -> None:
        if not 0 <= int(i) < self.dim_n:
            raise IndexError(f"Brownian coordinate {i} out of range for n = {self.dim_n}")


def synthesize(ensemble: ScenarioEnsemble) -> GBrownianPaths:
    return GBrownianPaths(ensemble)


def _scalar_process(x: Any) -> np.ndarray:
    v = _values(x)
    if v.ndim == 4:
        if v.shape[3] != 1:
            raise DimensionError("integrand must be scalar-valued")
        v = v[..., 0]
    if v.ndim != 3:
        raise DimensionError(f"integrand needs shape (S, N, M+1), got {v.shape}")
    return v


def _running(incr: np.ndarray) -> ProcessTensor:
    s, n, m = incr.shape
    out = np.zeros((s, n, m + 1))
    np.cumsum(incr, axis=2, out=out[:, :, 1:])
    return ProcessTensor(out)


def ito_integral(x: Any, paths: GBrownianPaths, i: int = 0) -> ProcessTensor:
    """Running integral ``∫ x dB^i``; node ``k`` of ``x`` multiplies step ``k``."""
    paths._check_coord(i)
    v = _scalar_process(x)
    return _running(v[:, :, :-1] * paths.db[..., i])


def qv_integral(x: Any, paths: GBrownianPaths, i: int = 0, j: int | None = None) -> ProcessTensor:
    """Running integral ``∫ x d⟨B^i, B^j⟩`` (``j`` defaults to ``i``)."""
    j = i if j is None else j
    paths._check_coord(i)
    paths._check_coord(j)
    v = _scalar_process(x)
    return _running(v[:, :, :-1] * paths.dqv[:, None, :, i, j])
