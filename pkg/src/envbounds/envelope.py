"""Envelope score estimator for aggregated intersection bounds.

Target: ``psi0 = E_X[min_t s(t, X)]`` (or ``max``). For each observation the
plug-in classifier picks the index minimising the fitted surface at ``X_i``
(fit on the complement of ``i``'s fold); the estimate is the sample mean of
the chosen unbiased signal ``g_t(W_i)``. The variance is the plug-in second
moment of the realised envelope scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Mapping

import numpy as np

from .core import FiniteIndexSet, FoldAssignment, Sample
from .errors import BadLevel, MissingNuisance, NonFiniteScore
from .first_stage import CrossFitNuisance, RegressionSurface

MIN, MAX = "min", "max"
MARGIN_THRESHOLDS = (0.01, 0.05, 0.1)


def z_value(level: float) -> float:
    if not (0.0 < level < 1.0):
        raise BadLevel(f"confidence level must lie in (0, 1), got {level!r}")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def _check_direction(direction: str) -> str:
    if direction not in (MIN, MAX):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    return direction


def choose_rows(values: np.ndarray, direction: str = MIN) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise argmin/argmax with first-label tie-break, plus the runner-up gap.

    ``values`` has shape ``(rows, T)``. The gap is ``+inf`` when ``T == 1``.
    """
    values = np.asarray(values, dtype=float)
    _check_direction(direction)
    v = values if direction == MIN else -values
    idx = np.argmin(v, axis=1)
    if v.shape[1] == 1:
        return idx, np.full(v.shape[0], np.inf)
    part = np.partition(v, 1, axis=1)
    return idx, part[:, 1] - part[:, 0]


@dataclass(frozen=True, eq=False)
class ClassifierMap:
    """Chosen label per covariate cell, with the runner-up gap."""

    labels: tuple
    cells: tuple
    choice: np.ndarray
    gap: np.ndarray

    def label_at(self, x) -> object:
        return self.labels[int(self.choice[self.cells.index(x)])]


def classify(surface: RegressionSurface, direction: str = MIN) -> ClassifierMap:
    """Plug-in classifier ``t(x) = argmin_t s(t, x)`` on a finite surface."""
    idx, gap = choose_rows(surface.values.T, direction)
    return ClassifierMap(surface.labels, surface.cells, idx, gap)


@dataclass(frozen=True)
class ScoreFamily:
    """Unbiased signals ``g_t(W)`` and the regression surface used to classify.

    Both callables receive a mapping from nuisance name to per-observation
    fitted values and return arrays of shape ``(n, len(labels))``.
    """

    labels: FiniteIndexSet
    signals: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    regression: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    requires: tuple[str, ...] = ()


def observed_family(signals: np.ndarray, labels=None, name: str = "signal_means") -> ScoreFamily:
    """Family whose signals are observed columns; the surface is their cell mean.

    Pair with ``{name: cell_mean_fit(sample, signals, folds=...)}``.
    """
    signals = np.asarray(signals, dtype=float)
    signals = signals.reshape(signals.shape[0], -1)
    lab = FiniteIndexSet(tuple(range(signals.shape[1])) if labels is None else labels)
    return ScoreFamily(
        labels=lab,
        signals=lambda nu: signals,
        regression=lambda nu: np.asarray(nu[name]).reshape(signals.shape),
        requires=(name,),
    )


def resolve_nuisance(nuisance: Mapping[str, object], requires) -> dict[str, np.ndarray]:
    out = {}
    for key in requires:
        if key not in nuisance or nuisance[key] is None:
            raise MissingNuisance(f"nuisance {key!r} is required but was not supplied")
        v = nuisance[key]
        out[key] = v.fitted if isinstance(v, CrossFitNuisance) else np.asarray(v)
    return out


def folds_of(nuisance: Mapping[str, object]) -> FoldAssignment | None:
    for v in nuisance.values():
        if isinstance(v, CrossFitNuisance) and v.folds is not None:
            return v.folds
    return None


@dataclass(frozen=True, eq=False)
class EnvelopeEstimate:
    psi_hat: float
    variance_hat: float
    se: float
    ci: tuple[float, float]
    level: float
    n: int
    K: int | None = None
    seed: int | None = None
    per_fold_means: tuple[float, ...] = ()
    scores: np.ndarray | None = field(default=None, repr=False)
    choice: np.ndarray | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {
            "psi_hat": self.psi_hat,
            "variance_hat": self.variance_hat,
            "se": self.se,
            "ci_lo": self.ci[0],
            "ci_hi": self.ci[1],
            "level": self.level,
            "n": self.n,
            "K": self.K,
            "seed": self.seed,
            "per_fold_means": list(self.per_fold_means),
        }

    def to_json(self) -> str:
        return json.dumps(self.record(), sort_keys=True)


def summarize_scores(
    scores: np.ndarray,
    level: float = 0.95,
    folds: FoldAssignment | None = None,
    choice: np.ndarray | None = None,
    variance: float | None = None,
    cls=EnvelopeEstimate,
    **extra,
) -> EnvelopeEstimate:
    """Mean, plug-in variance, standard error and normal CI of realised scores."""
    scores = np.asarray(scores, dtype=float)
    bad = np.flatnonzero(~np.isfinite(scores))
    if bad.size:
        raise NonFiniteScore(int(bad[0]))
    z = z_value(level)
    n = scores.size
    psi = float(np.mean(scores))
    if variance is None:
        variance = float(np.mean(scores * scores)) - psi * psi
    variance = max(float(variance), 0.0)
    se = float(np.sqrt(variance / n))
    per_fold = ()
    if folds is not None:
        per_fold = tuple(float(np.mean(scores[folds.fold_of == k])) for k in range(folds.K))
    return cls(
        psi_hat=psi,
        variance_hat=variance,
        se=se,
        ci=(psi - z * se, psi + z * se),
        level=level,
        n=n,
        K=None if folds is None else folds.K,
        seed=None if folds is None else folds.seed,
        per_fold_means=per_fold,
        scores=scores,
        choice=choice,
        **extra,
    )


def envelope_scores(
    family: ScoreFamily, nuisance: Mapping[str, object], direction: str = MIN
) -> tuple[np.ndarray, np.ndarray]:
    """Realised envelope scores ``g_{t(X_i)}(W_i)`` and the chosen label index per row."""
    nu = resolve_nuisance(nuisance, family.requires)
    G = np.asarray(family.signals(nu), dtype=float)
    R = np.asarray(family.regression(nu), dtype=float)
    if G.shape != R.shape or G.shape[1] != len(family.labels):
        raise ValueError(f"signal shape {G.shape} and regression shape {R.shape} disagree with labels")
    bad = np.flatnonzero(~np.all(np.isfinite(R), axis=1))
    if bad.size:
        raise NonFiniteScore(int(bad[0]))
    idx, _ = choose_rows(R, direction)
    return G[np.arange(G.shape[0]), idx], idx


def estimate(
    sample: Sample,
    family: ScoreFamily,
    nuisance: Mapping[str, object],
    direction: str = MIN,
    level: float = 0.95,
) -> EnvelopeEstimate:
    """Cross-fitted envelope score estimate of ``E_X[min_t s(t, X)]``."""
    scores, idx = envelope_scores(family, nuisance, direction)
    if scores.size != sample.n:
        raise ValueError("family produced scores for a different sample size")
    return summarize_scores(scores, level, folds_of(nuisance), idx)


def estimate_with_oracle(
    sample: Sample,
    family: ScoreFamily,
    nuisance: Mapping[str, object],
    oracle_nuisance: Mapping[str, object],
    direction: str = MIN,
    level: float = 0.95,
) -> tuple[EnvelopeEstimate, EnvelopeEstimate, float]:
    """Feasible and oracle estimates on the same draws and ``sqrt(N) * (feasible - oracle)``."""
    feasible = estimate(sample, family, nuisance, direction, level)
    oracle = estimate(sample, family, oracle_nuisance, direction, level)
    gap = float(np.sqrt(sample.n) * (feasible.psi_hat - oracle.psi_hat))
    return feasible, oracle, gap


@dataclass(frozen=True, eq=False)
class MarginHistogram:
    gaps: np.ndarray
    weights: np.ndarray
    mass_below: dict

    def mass_at_most(self, t: float) -> float:
        return float(self.weights[self.gaps <= t].sum())


def margin_histogram(
    surface: RegressionSurface,
    weights=None,
    direction: str = MIN,
    thresholds=MARGIN_THRESHOLDS,
    tol: float = 0.0,
) -> MarginHistogram:
    """Distribution over cells of the gap between the optimum and the best non-optimal label.

    Labels tied with the optimum (within ``tol``) belong to the arg-optimum
    set and are excluded from the runner-up. Cells without a runner-up (one
    label, or all labels tied) carry no gap. ``mass_below[t]`` is the
    covariate mass with gap ``<= t``.
    """
    v = surface.values.T if direction == MIN else -surface.values.T
    C = v.shape[0]
    w = np.full(C, 1.0 / C) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    best = v.min(axis=1, keepdims=True)
    others = np.where(v > best + tol, v, np.inf)
    runner = others.min(axis=1)
    has = np.isfinite(runner)
    gaps = (runner - best[:, 0])[has]
    wts = w[has]
    mass = {float(t): float(wts[gaps <= t].sum()) for t in thresholds}
    return MarginHistogram(gaps, wts, mass)
