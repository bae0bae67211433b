"""Aggregated minimax values ``E_X[sup_kappa inf_t s(kappa, t, X)]``.

Matrices are indexed ``M[kappa, t]``. A pure saddle is a cell that is the
minimum of its row (over ``t``) and the maximum of its column (over
``kappa``); it exists exactly when ``max_kappa min_t == min_t max_kappa``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .core import FiniteIndexSet, Sample
from .envelope import EnvelopeEstimate, folds_of, resolve_nuisance, summarize_scores
from .errors import BadGrid, NoSaddle


@dataclass(frozen=True)
class SaddleCell:
    kappa: int
    t: int
    value: float


def saddle_cells(M: np.ndarray):
    """Vectorised saddle search over the last two axes.

    Returns ``(exists, kappa_index, t_index, value)``, each shaped like the
    leading axes; the chosen cell is the lexicographically first saddle.
    """
    M = np.asarray(M, dtype=float)
    nk, nt = M.shape[-2:]
    rowmin = M.min(axis=-1, keepdims=True)
    colmax = M.max(axis=-2, keepdims=True)
    mask = (M == rowmin) & (M == colmax)
    flat = mask.reshape(M.shape[:-2] + (nk * nt,))
    exists = flat.any(axis=-1)
    first = np.argmax(flat, axis=-1)
    ki, ti = np.divmod(first, nt)
    value = np.take_along_axis(M.reshape(M.shape[:-2] + (nk * nt,)), first[..., None], axis=-1)[..., 0]
    return exists, ki, ti, value


def find_saddle(matrix) -> SaddleCell:
    """Pure saddle of a ``|K| x |T|`` matrix; raises :class:`NoSaddle` if maxmin < minmax."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ValueError("find_saddle expects a finite 2-d matrix")
    exists, ki, ti, value = saddle_cells(M)
    if not exists:
        maxmin = M.min(axis=1).max()
        minmax = M.max(axis=0).min()
        raise NoSaddle(f"sup-inf {maxmin:g} < inf-sup {minmax:g}")
    return SaddleCell(int(ki), int(ti), float(value))


@dataclass(frozen=True, eq=False)
class SaddleMap:
    cells: tuple
    kappa: np.ndarray
    t: np.ndarray
    value: np.ndarray
    exists: np.ndarray


def saddle_map(cell_matrices, cells=None) -> SaddleMap:
    """Saddle per covariate cell from an array of shape ``(C, |K|, |T|)``."""
    cm = np.asarray(cell_matrices, dtype=float)
    exists, ki, ti, value = saddle_cells(cm)
    cells = tuple(range(cm.shape[0])) if cells is None else tuple(cells)
    return SaddleMap(cells, ki, ti, np.where(exists, value, np.nan), exists)


@dataclass(frozen=True)
class SaddleFamily:
    """Signals ``g_{kappa,t}(W)`` and fitted ``s(kappa, t, X_i)``, both shaped ``(n, |K|, |T|)``."""

    kappa_labels: FiniteIndexSet
    t_labels: FiniteIndexSet
    signals: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    regression: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    requires: tuple[str, ...] = ()


def observed_saddle_family(signals: np.ndarray, name: str = "signal_means") -> SaddleFamily:
    """Family of observed signals ``(n, |K|, |T|)``; pair with a cell-mean fit of the flattened signals."""
    signals = np.asarray(signals, dtype=float)
    n, nk, nt = signals.shape
    return SaddleFamily(
        FiniteIndexSet(tuple(range(nk))),
        FiniteIndexSet(tuple(range(nt))),
        signals=lambda nu: signals,
        regression=lambda nu: np.asarray(nu[name]).reshape(n, nk, nt),
        requires=(name,),
    )


@dataclass(frozen=True, eq=False)
class SaddleEstimate(EnvelopeEstimate):
    kappa_size: int = 0
    t_size: int = 0

    def record(self) -> dict:
        rec = super().record()
        rec["grid"] = {"kappa": self.kappa_size, "t": self.t_size}
        return rec


def saddle_scores(family: SaddleFamily, nuisance: Mapping[str, object], sample: Sample | None = None):
    nu = resolve_nuisance(nuisance, family.requires)
    G = np.asarray(family.signals(nu), dtype=float)
    R = np.asarray(family.regression(nu), dtype=float)
    shape = (len(family.kappa_labels), len(family.t_labels))
    if G.shape != R.shape or G.shape[1:] != shape:
        raise ValueError(f"signal shape {G.shape} / regression shape {R.shape} disagree with grid {shape}")
    exists, ki, ti, _ = saddle_cells(R)
    if not exists.all():
        rows = np.flatnonzero(~exists)
        codes = rows
        if sample is not None and sample.discrete:
            codes = sorted({sample.x_labels[c] for c in sample.x[rows]})
        raise NoSaddle("fitted surface has no pure saddle", cells=[int(c) for c in np.unique(codes)])
    rows = np.arange(G.shape[0])
    return G[rows, ki, ti], ki * shape[1] + ti


def estimate_saddle(
    sample: Sample,
    family: SaddleFamily,
    nuisance: Mapping[str, object],
    level: float = 0.95,
) -> SaddleEstimate:
    """Envelope saddle-value estimate: mean of ``g_{kappa(X_i), t(X_i)}(W_i)`` at the fitted saddle."""
    scores, cell = saddle_scores(family, nuisance, sample)
    return summarize_scores(
        scores,
        level,
        folds_of(nuisance),
        cell,
        cls=SaddleEstimate,
        kappa_size=len(family.kappa_labels),
        t_size=len(family.t_labels),
    )


def best_case_welfare(
    sample: Sample,
    nuisance,
    tau: float,
    u_grid=None,
    level: float = 0.95,
) -> SaddleEstimate:
    """Optimal best-case distributional welfare ``E_X[inf_{u in [tau,1]} max(s(u, X), 0)]``.

    ``s(u, x) = Q_u(S(1)|x) - Q_{u-tau}(S(0)|x)``; the outer ``max(., 0)`` is
    the two-label maximising side ``{value, zero}``.
    """
    from .apps import default_u_grid, welfare_surface

    if u_grid is None:
        u_grid = default_u_grid(tau, upper=True)
    u_grid = np.asarray(u_grid, dtype=float)
    if not (0 < tau < 1) or u_grid.size == 0 or u_grid.min() < tau or u_grid.max() > 1:
        raise BadGrid(f"best-case grid must lie in [tau, 1] = [{tau}, 1]")
    fam = welfare_saddle_family(nuisance, tau, u_grid)
    return estimate_saddle(sample, fam, {"welfare": nuisance.cdf1.cdf}, level)


def welfare_saddle_family(nuisance, tau: float, u_grid) -> SaddleFamily:
    from .apps import welfare_surface

    s = welfare_surface(nuisance, tau, u_grid, upper=True)
    R = np.stack([s, np.zeros_like(s)], axis=1)
    return SaddleFamily(
        FiniteIndexSet(("value", "zero")),
        FiniteIndexSet(tuple(float(u) for u in u_grid)),
        signals=lambda nu: R,
        regression=lambda nu: R,
        requires=("welfare",),
    )
