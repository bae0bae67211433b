"""Cross-fitted nuisance estimation.

The default learner is a cell mean over discrete covariate codes. For
observation ``i`` in fold ``k`` the fitted value is computed from fold
``k``'s complement only. Complement sums are accumulated from per-fold sums
that exclude fold ``k`` outright (no ``total - fold`` subtraction), so the
fitted values of fold ``k`` are bit-for-bit independent of fold ``k``'s data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FoldAssignment, Sample
from .errors import EmptyCell, GridMismatch, ZeroKernelMass

CLIP_EPS = 1e-3


@dataclass(frozen=True, eq=False)
class RegressionSurface:
    """Values ``s(t, x)`` on a finite grid: ``values[t_index, x_index]``."""

    labels: tuple
    cells: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.labels), len(self.cells)):
            raise GridMismatch(f"values shape {v.shape} does not match grid {(len(self.labels), len(self.cells))}")
        if not np.all(np.isfinite(v)):
            raise ValueError("regression surface must be finite on its grid")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "values", v)

    def value(self, t, x) -> float:
        return float(self.values[self.labels.index(t), self.cells.index(x)])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "value"])
            for i, t in enumerate(self.labels):
                for j, x in enumerate(self.cells):
                    w.writerow([t, x, repr(float(self.values[i, j]))])


@dataclass(frozen=True, eq=False)
class CrossFitNuisance:
    """Per-fold fitted surfaces plus the per-observation accessor.

    ``fitted[i]`` is the value of the surface trained without observation
    ``i``'s fold, evaluated at ``X_i``. ``fold_values`` has shape
    ``(K, C, *trailing)`` for discrete covariates (``K == 1`` for full-sample
    or known nuisances) and is ``None`` for kernel fits.
    """

    fitted: np.ndarray
    folds: FoldAssignment | None = None
    fold_values: np.ndarray | None = None
    labels: tuple | None = None

    def __post_init__(self):
        for name in ("fitted", "fold_values"):
            v = getattr(self, name)
            if v is not None:
                v = np.ascontiguousarray(v, dtype=float)
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    @classmethod
    def known(cls, cell_values, sample: Sample, labels=None) -> "CrossFitNuisance":
        """Wrap a true (population) surface indexed by covariate cell."""
        cell_values = np.asarray(cell_values, dtype=float)
        return cls(fitted=cell_values[sample.x], fold_values=cell_values[None], labels=labels)

    def surface(self, k: int = 0, cells: tuple | None = None) -> RegressionSurface:
        """Fold ``k``'s surface as a :class:`RegressionSurface` (labels x cells)."""
        if self.fold_values is None:
            raise ValueError("kernel fits have no cell surface")
        v = self.fold_values[k]
        if v.ndim == 1:
            v = v[:, None]
        v = v.reshape(v.shape[0], -1).T
        labels = self.labels if self.labels is not None else tuple(range(v.shape[0]))
        cells = cells if cells is not None else tuple(range(v.shape[1]))
        return RegressionSurface(labels, cells, v)

    def map(self, fn) -> "CrossFitNuisance":
        """Apply an elementwise transform to all stored values."""
        fv = None if self.fold_values is None else fn(self.fold_values)
        return CrossFitNuisance(fn(self.fitted), self.folds, fv, self.labels)


def _as_columns(sample: Sample, target, where):
    n = sample.n
    t = np.asarray(target, dtype=float)
    squeeze = t.ndim == 1
    t = t.reshape(n, -1)
    if where is None:
        w = np.ones_like(t, dtype=bool)
    else:
        w = np.broadcast_to(np.asarray(where, dtype=bool).reshape(n, -1), t.shape)
    t = np.where(w, t, 0.0)
    return t, w, squeeze


def cell_mean_fit(
    sample: Sample,
    target,
    where=None,
    folds: FoldAssignment | None = None,
    *,
    probability: bool = False,
    eps: float = CLIP_EPS,
    fallback: bool = True,
    labels: tuple | None = None,
) -> CrossFitNuisance:
    """Cross-fitted cell means of ``target`` among rows where ``where`` holds.

    Parameters
    ----------
    target : array, shape (n,) or (n, m)
        Values to average; entries outside ``where`` are ignored (they may be NaN).
    where : bool array, shape (n,) or (n, m), optional
        Conditioning event, e.g. ``sample.d == 1``.
    folds : FoldAssignment, optional
        If omitted, a single full-sample surface is fit.
    probability : bool
        Clip fitted values to ``[eps, 1 - eps]``.
    fallback : bool
        Replace an empty cell by the complement's pooled mean instead of raising.
    """
    if not sample.discrete:
        raise ValueError("cell_mean_fit needs discrete covariate codes; use kernel_fit")
    t, w, squeeze = _as_columns(sample, target, where)
    n, m = t.shape
    C = sample.n_cells
    K = 1 if folds is None else folds.K
    fold_of = np.zeros(n, dtype=np.intp) if folds is None else folds.fold_of
    g = fold_of * C + sample.x
    sums = np.empty((K * C, m))
    counts = np.empty((K * C, m))
    for j in range(m):
        sums[:, j] = np.bincount(g, weights=t[:, j], minlength=K * C)
        counts[:, j] = np.bincount(g, weights=w[:, j], minlength=K * C)
    sums = sums.reshape(K, C, m)
    counts = counts.reshape(K, C, m)
    if folds is not None:
        comp_s = np.empty_like(sums)
        comp_c = np.empty_like(counts)
        for k in range(K):
            others = np.arange(K) != k
            comp_s[k] = sums[others].sum(axis=0)
            comp_c[k] = counts[others].sum(axis=0)
        sums, counts = comp_s, comp_c

    values = np.empty_like(sums)
    filled = counts > 0
    values[filled] = sums[filled] / counts[filled]
    if not filled.all():
        kk, cc, jj = np.nonzero(~filled)
        if not fallback:
            raise EmptyCell(int(cc[0]), None if folds is None else int(kk[0]))
        pooled_c = counts.sum(axis=1)
        if np.any(pooled_c[kk, jj] == 0):
            bad = np.flatnonzero(pooled_c[kk, jj] == 0)[0]
            raise EmptyCell(int(cc[bad]), None if folds is None else int(kk[bad]))
        values[kk, cc, jj] = sums.sum(axis=1)[kk, jj] / pooled_c[kk, jj]
    if probability:
        np.clip(values, eps, 1.0 - eps, out=values)
    if squeeze:
        values = values[..., 0]
    return CrossFitNuisance(values[fold_of, sample.x], folds, values, labels)


def _gauss_weights(x_eval: np.ndarray, x_train: np.ndarray, bandwidth: float) -> np.ndarray:
    diff = (x_eval[:, None, :] - x_train[None, :, :]) / bandwidth
    return np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff))


def kernel_predict(x_train, y_train, x_eval, bandwidth: float) -> np.ndarray:
    """Nadaraya-Watson estimate with a product Gaussian kernel."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    x_train = np.asarray(x_train, dtype=float)
    x_train = x_train.reshape(x_train.shape[0], -1)
    x_eval = np.asarray(x_eval, dtype=float).reshape(-1, x_train.shape[1])
    y_train = np.asarray(y_train, dtype=float)
    squeeze = y_train.ndim == 1
    y_train = y_train.reshape(y_train.shape[0], -1)
    wts = _gauss_weights(x_eval, x_train, bandwidth)
    mass = wts.sum(axis=1)
    bad = np.flatnonzero(~(mass > 0))
    if bad.size:
        raise ZeroKernelMass(f"kernel weights vanish at evaluation point {int(bad[0])} (bandwidth {bandwidth:g})")
    out = (wts @ y_train) / mass[:, None]
    return out[:, 0] if squeeze else out


def kernel_fit(
    sample: Sample,
    target,
    bandwidth: float,
    folds: FoldAssignment,
    where=None,
) -> CrossFitNuisance:
    """Cross-fitted Nadaraya-Watson regression for real-vector covariates."""
    if sample.discrete:
        x = np.asarray(sample.x, dtype=float)[:, None]
    else:
        x = np.asarray(sample.x, dtype=float)
    t = np.asarray(target, dtype=float)
    squeeze = t.ndim == 1
    t = t.reshape(sample.n, -1)
    w = np.ones(sample.n, dtype=bool) if where is None else np.asarray(where, dtype=bool)
    fitted = np.empty_like(t)
    for k in range(folds.K):
        held = folds.fold_of == k
        train = ~held & w
        fitted[held] = kernel_predict(x[train], t[train], x[held], bandwidth)
    return CrossFitNuisance(fitted[:, 0] if squeeze else fitted, folds)


def sup_norm_gap(estimated: RegressionSurface, truth: RegressionSurface) -> float:
    """``max_{t,x} |estimated - truth|`` on identical grids."""
    if estimated.labels != truth.labels or estimated.cells != truth.cells:
        raise GridMismatch("surfaces are defined on different grids")
    return float(np.max(np.abs(estimated.values - truth.values)))


@dataclass(frozen=True, eq=False)
class ConditionalCdfSurface:
    """Conditional CDF on a finite outcome support: ``cdf.fitted[i, j] = F(support[j] | X_i)``."""

    support: np.ndarray
    cdf: CrossFitNuisance

    def distribution(self, k: int, cell: int):
        from .core import DiscreteDistribution

        F = self.cdf.fold_values[k, cell]
        return DiscreteDistribution(self.support, np.diff(F, prepend=0.0))


def fit_conditional_cdf(sample: Sample, where, folds: FoldAssignment | None = None, **kw) -> ConditionalCdfSurface:
    """Cell CDF of ``Y`` among rows in ``where`` (must be a subset of selected rows)."""
    where = np.asarray(where, dtype=bool) & sample.usable_y
    support = sample.y_support
    y = np.where(sample.usable_y, sample.y, np.inf)
    ind = (y[:, None] <= support[None, :]).astype(float)
    fit = cell_mean_fit(sample, ind, where, folds, labels=tuple(support.tolist()), **kw)
    return ConditionalCdfSurface(support, fit)


def cdf_at(cdf_values: np.ndarray, support: np.ndarray, points, left: bool = False) -> np.ndarray:
    """Evaluate step CDFs (``cdf_values[..., j] = F(support[j])``) at arbitrary points.

    ``left=True`` returns the left limit ``F(v-)`` (mass strictly below ``v``).
    """
    points = np.asarray(points, dtype=float)
    side = "left" if left else "right"
    pos = np.searchsorted(support, points, side=side) - 1
    padded = np.concatenate([np.zeros(cdf_values.shape[:-1] + (1,)), cdf_values], axis=-1)
    return padded[..., pos + 1]
