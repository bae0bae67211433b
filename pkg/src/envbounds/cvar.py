"""Conditional value-at-risk for discrete laws.

Two independent routes are provided. The *direct* route averages the
truncated law (mass ``alpha`` taken from the top or bottom of the
distribution). The *dual* route minimises ``beta + E[(Y - beta)+] / alpha``
(or maximises ``beta + E[min(Y - beta, 0)] / alpha``) over the support
points, where the piecewise-linear objective attains its optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiscreteDistribution
from .errors import BadLevel

_TOL = 1e-12


@dataclass(frozen=True)
class CvarResult:
    value: float
    minimizer_beta: float
    alpha: float


def _check_level(u: float, name: str = "level") -> float:
    u = float(u)
    if not (0.0 < u <= 1.0):
        raise BadLevel(f"{name} must lie in (0, 1], got {u!r}")
    return u


def quantile_index(cdf: np.ndarray, u) -> np.ndarray:
    """Index of the left-inverse ``inf{beta : F(beta) >= u}`` along the last axis.

    ``u <= 0`` is read as ``Q(0+)``, the smallest point carrying positive mass.
    Works on stacked CDFs: ``cdf`` has shape ``(..., m)`` and ``u`` broadcasts
    against the leading axes (append an axis to query several levels).
    """
    cdf = np.asarray(cdf, dtype=float)
    u = np.asarray(u, dtype=float)
    hit = np.where(u[..., None] > 0, cdf >= u[..., None] - _TOL, cdf > _TOL)
    return np.argmax(hit, axis=-1)


def generalized_quantile(dist: DiscreteDistribution, u: float) -> float:
    """Smallest support point ``beta`` with ``F(beta) >= u``, for ``u`` in (0, 1]."""
    u = _check_level(u, "u")
    return float(dist.support[quantile_index(dist.cdf(), u)])


def _q_upper(dist: DiscreteDistribution, alpha: float) -> int:
    return int(quantile_index(dist.cdf(), 1.0 - alpha))


def cvar_upper_direct(dist: DiscreteDistribution, alpha: float) -> CvarResult:
    """Mean of the upper ``alpha``-tail of ``dist``."""
    alpha = _check_level(alpha, "alpha")
    F = dist.cdf()
    j = _q_upper(dist, alpha)
    edge = max(F[j] - (1.0 - alpha), 0.0)
    y, p = dist.support, dist.probs
    value = (edge * y[j] + p[j + 1 :] @ y[j + 1 :]) / alpha
    return CvarResult(float(value), float(y[j]), alpha)


def cvar_lower_direct(dist: DiscreteDistribution, alpha: float) -> CvarResult:
    """Mean of the lower ``alpha``-tail of ``dist``."""
    alpha = _check_level(alpha, "alpha")
    F = dist.cdf()
    j = int(quantile_index(F, alpha))
    below = F[j - 1] if j > 0 else 0.0
    edge = max(alpha - below, 0.0)
    y, p = dist.support, dist.probs
    value = (p[:j] @ y[:j] + edge * y[j]) / alpha
    return CvarResult(float(value), float(y[j]), alpha)


def _pick(objective: np.ndarray, best: float) -> int:
    # smallest support point within rounding of the optimum
    scale = 1.0 + abs(best)
    return int(np.flatnonzero(np.abs(objective - best) <= _TOL * scale)[0])


def cvar_upper_dual(dist: DiscreteDistribution, alpha: float) -> CvarResult:
    """``inf_beta beta + E[max(Y - beta, 0)] / alpha`` over the support."""
    alpha = _check_level(alpha, "alpha")
    y, p = dist.support, dist.probs
    excess = np.maximum(y[None, :] - y[:, None], 0.0) @ p
    obj = y + excess / alpha
    j = _pick(obj, obj.min())
    return CvarResult(float(obj[j]), float(y[j]), alpha)


def cvar_lower_dual(dist: DiscreteDistribution, alpha: float) -> CvarResult:
    """``sup_beta beta + E[min(Y - beta, 0)] / alpha`` over the support."""
    alpha = _check_level(alpha, "alpha")
    y, p = dist.support, dist.probs
    shortfall = np.minimum(y[None, :] - y[:, None], 0.0) @ p
    obj = y + shortfall / alpha
    j = _pick(obj, obj.max())
    return CvarResult(float(obj[j]), float(y[j]), alpha)
