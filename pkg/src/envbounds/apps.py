"""Application layers: each assembles an index set, signals and nuisances, then
delegates to :func:`envbounds.envelope.estimate` or
:func:`envbounds.saddle.estimate_saddle`.

Signals are the augmented (doubly robust) form ``arm/mu * (target - fit) + fit``
unless stated otherwise; with cross-fitted cell means their conditional bias
is the product of two first-stage errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import STAR, FiniteIndexSet, FoldAssignment, Sample
from .cvar import quantile_index
from .envelope import MAX, MIN, EnvelopeEstimate, ScoreFamily, estimate, folds_of, summarize_scores
from .errors import (
    BadGrid,
    DegenerateDenominator,
    MissingOutcome,
    OverlapViolation,
    UnsupportedApplication,
)
from .first_stage import (
    CLIP_EPS,
    ConditionalCdfSurface,
    CrossFitNuisance,
    cell_mean_fit,
    fit_conditional_cdf,
)

_SNAP = 1e-9


def _aipw(arm: np.ndarray, propensity: np.ndarray, target: np.ndarray, fit: np.ndarray) -> np.ndarray:
    return arm / propensity * (target - fit) + fit


def _col(a: np.ndarray) -> np.ndarray:
    return a[:, None]


# ---------------------------------------------------------------- Frechet


@dataclass(frozen=True, eq=False)
class BinaryArmNuisance:
    """Propensity ``mu1(x)`` and arm-wise selection probabilities ``s(t, x) = P(S=1 | D=t, X=x)``."""

    mu1: CrossFitNuisance
    s1: CrossFitNuisance
    s0: CrossFitNuisance

    def as_mapping(self) -> dict:
        return {"mu1": self.mu1, "s1": self.s1, "s0": self.s0}


def fit_frechet_nuisance(sample: Sample, folds: FoldAssignment | None, eps: float = CLIP_EPS) -> BinaryArmNuisance:
    d = sample.d.astype(float)
    return BinaryArmNuisance(
        mu1=cell_mean_fit(sample, d, folds=folds, probability=True, eps=eps),
        s1=cell_mean_fit(sample, sample.s, sample.d == 1, folds),
        s0=cell_mean_fit(sample, sample.s, sample.d == 0, folds),
    )


@dataclass(frozen=True)
class BoundPair:
    lower: EnvelopeEstimate
    upper: EnvelopeEstimate

    def estimates(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


def _frechet_signals(sample: Sample, nu) -> tuple[np.ndarray, np.ndarray]:
    d = sample.d.astype(float)
    s = sample.s.astype(float)
    g1 = _aipw(d, nu["mu1"], s, nu["s1"])
    g0 = _aipw(1.0 - d, 1.0 - nu["mu1"], s, nu["s0"])
    return g1, g0


def frechet_upper_family(sample: Sample) -> ScoreFamily:
    def signals(nu):
        return np.column_stack(_frechet_signals(sample, nu))

    return ScoreFamily(
        FiniteIndexSet((1, 0)),
        signals,
        lambda nu: np.column_stack([nu["s1"], nu["s0"]]),
        ("mu1", "s1", "s0"),
    )


def frechet_lower_family(sample: Sample) -> ScoreFamily:
    def signals(nu):
        g1, g0 = _frechet_signals(sample, nu)
        return np.column_stack([g1 + g0 - 1.0, np.zeros(sample.n)])

    return ScoreFamily(
        FiniteIndexSet(("sum", STAR)),
        signals,
        lambda nu: np.column_stack([nu["s1"] + nu["s0"] - 1.0, np.zeros(sample.n)]),
        ("mu1", "s1", "s0"),
    )


def frechet_bounds(sample: Sample, nuisance: BinaryArmNuisance, level: float = 0.95) -> BoundPair:
    """Bounds on the always-takers' share ``P(S(1) = S(0) = 1)``.

    Upper: ``E[min(s(1,X), s(0,X))]``. Lower: ``E[max(s(1,X) + s(0,X) - 1, 0)]``.
    """
    nu = nuisance.as_mapping()
    upper = estimate(sample, frechet_upper_family(sample), nu, MIN, level)
    lower = estimate(sample, frechet_lower_family(sample), nu, MAX, level)
    return BoundPair(lower, upper)


# ---------------------------------------------------------------- Lee


@dataclass(frozen=True, eq=False)
class LeeNuisance:
    """Nuisances for trimming bounds.

    ``law.fitted[i, j]`` is ``P(Y = support[j] | D=1, S=1, X_i)``. After the
    monotonicity projection ``s1 >= s0`` holds everywhere, so
    ``p(x) = s0(x) / s1(x)`` lies in ``[0, 1]``.
    """

    mu1: CrossFitNuisance
    s1: CrossFitNuisance
    s0: CrossFitNuisance
    law: CrossFitNuisance
    support: np.ndarray

    def as_mapping(self) -> dict:
        return {"mu1": self.mu1, "s1": self.s1, "s0": self.s0, "law": self.law}

    @property
    def p(self) -> np.ndarray:
        return np.divide(self.s0.fitted, self.s1.fitted, out=np.ones(self.s1.fitted.shape), where=self.s1.fitted > 0)


def project_monotone(s1: CrossFitNuisance, s0: CrossFitNuisance) -> tuple[CrossFitNuisance, CrossFitNuisance]:
    """Pointwise swap so that ``s1 >= s0`` on every fitted surface."""
    hi = CrossFitNuisance(
        np.maximum(s1.fitted, s0.fitted), s1.folds, np.maximum(s1.fold_values, s0.fold_values), s1.labels
    )
    lo = CrossFitNuisance(
        np.minimum(s1.fitted, s0.fitted), s0.folds, np.minimum(s1.fold_values, s0.fold_values), s0.labels
    )
    return hi, lo


def fit_lee_nuisance(
    sample: Sample, folds: FoldAssignment | None, eps: float = CLIP_EPS, monotone: bool = True
) -> LeeNuisance:
    base = fit_frechet_nuisance(sample, folds, eps)
    s1, s0 = project_monotone(base.s1, base.s0) if monotone else (base.s1, base.s0)
    support = sample.y_support
    onehot = (_col(sample.y_index) == np.arange(support.size)[None, :]).astype(float)
    law = cell_mean_fit(
        sample, onehot, (sample.d == 1) & sample.usable_y, folds, labels=tuple(support.tolist())
    )
    return LeeNuisance(base.mu1, s1, s0, law, support)


def _control_signal(sample: Sample, nu, augmented: bool) -> np.ndarray:
    d = sample.d.astype(float)
    s = sample.s.astype(float)
    mu0 = 1.0 - nu["mu1"]
    if augmented:
        return _aipw(1.0 - d, mu0, s, nu["s0"])
    return (1.0 - d) * s / mu0


def _selected_y(sample: Sample) -> np.ndarray:
    return np.where(sample.usable_y, sample.y, 0.0)


def lee_family(sample: Sample, support, upper: bool, augmented: bool = True) -> ScoreFamily:
    """Envelope family over ``beta`` in the outcome support.

    Upper: ``min_beta beta*s0 + s1*E[(Y - beta)+ | D=1,S=1,X]``.
    Lower: ``max_beta beta*s0 + s1*E[min(Y - beta, 0) | D=1,S=1,X]``.
    """
    beta = np.asarray(support, dtype=float)
    kink = np.maximum if upper else np.minimum
    P = kink(beta[:, None] - beta[None, :], 0.0)  # P[y_j, beta_b]
    sel = sample.usable_y
    y = _selected_y(sample)
    obs = np.where(_col(sel), kink(_col(y) - beta[None, :], 0.0), 0.0)
    d = sample.d.astype(float)

    def tail(nu):
        return _col(nu["s1"]) * (nu["law"] @ P)

    def regression(nu):
        return beta[None, :] * _col(nu["s0"]) + tail(nu)

    def signals(nu):
        h = _col(_control_signal(sample, nu, augmented))
        if augmented:
            a = tail(nu)
            return _col(d) / _col(nu["mu1"]) * (obs - a) + a + beta[None, :] * h
        return _col(d) * obs / _col(nu["mu1"]) + beta[None, :] * h

    return ScoreFamily(FiniteIndexSet(tuple(beta.tolist())), signals, regression, ("mu1", "s1", "s0", "law"))


def lee_binary_family(sample: Sample, upper: bool, augmented: bool = True) -> ScoreFamily:
    """Closed-form two-branch family for a binary outcome (labels ``beta = 0, 1``)."""
    d = sample.d.astype(float)
    s = sample.s.astype(float)
    y = _selected_y(sample)
    zeros = np.zeros(sample.n)

    def p_y(nu):
        return nu["law"][:, 1]

    def q_y(nu):  # P(Y = 0 | D=1, S=1, X)
        return nu["law"][:, 0]

    if upper:

        def regression(nu):
            return np.column_stack([nu["s1"] * p_y(nu), nu["s0"]])

        def signals(nu):
            h = _control_signal(sample, nu, augmented)
            if augmented:
                a = nu["s1"] * p_y(nu)
                top = d / nu["mu1"] * (s * y - a) + a
            else:
                top = d * s * y / nu["mu1"]
            return np.column_stack([top, h])

    else:

        def regression(nu):
            return np.column_stack([zeros, nu["s0"] - nu["s1"] * q_y(nu)])

        def signals(nu):
            h = _control_signal(sample, nu, augmented)
            if augmented:
                b = -nu["s1"] * q_y(nu)
                low = d / nu["mu1"] * (s * (y - 1.0) - b) + b + h
            else:
                low = d * s * (y - 1.0) / nu["mu1"] + h
            return np.column_stack([zeros, low])

    return ScoreFamily(FiniteIndexSet((0.0, 1.0)), signals, regression, ("mu1", "s1", "s0", "law"))


@dataclass(frozen=True)
class LeeBounds:
    lower: EnvelopeEstimate
    upper: EnvelopeEstimate
    numerator_lower: EnvelopeEstimate
    numerator_upper: EnvelopeEstimate
    denominator: EnvelopeEstimate

    def estimates(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "numerator_lower": self.numerator_lower,
            "numerator_upper": self.numerator_upper,
            "denominator": self.denominator,
        }


def ratio_estimate(num: EnvelopeEstimate, den: EnvelopeEstimate, folds=None) -> EnvelopeEstimate:
    """Delta-method estimate of ``E[g] / E[h]`` from paired per-observation scores."""
    r = num.psi_hat / den.psi_hat
    phi = (num.scores - r * den.scores) / den.psi_hat
    return summarize_scores(r + phi, num.level, folds, num.choice, variance=float(np.mean(phi * phi)))


def _lee(sample, nuisance: LeeNuisance, level, floor, upper_family, lower_family, augmented) -> LeeBounds:
    nu = nuisance.as_mapping()
    folds = folds_of(nu)
    from .envelope import resolve_nuisance

    h = _control_signal(sample, resolve_nuisance(nu, ("mu1", "s0")), augmented)
    den = summarize_scores(h, level, folds)
    if den.psi_hat < floor:
        raise DegenerateDenominator(f"estimated P(S=1|D=0) = {den.psi_hat:g} is below the floor {floor:g}")
    nu_up = estimate(sample, upper_family, nu, MIN, level)
    nu_lo = estimate(sample, lower_family, nu, MAX, level)
    return LeeBounds(
        lower=ratio_estimate(nu_lo, den, folds),
        upper=ratio_estimate(nu_up, den, folds),
        numerator_lower=nu_lo,
        numerator_upper=nu_up,
        denominator=den,
    )


def lee_bounds_discrete(
    sample: Sample, nuisance: LeeNuisance, level: float = 0.95, floor: float = 1e-3, augmented: bool = True
) -> LeeBounds:
    """Sharp trimming bounds on ``E[Y(1) | S(1) = S(0) = 1]`` for a finite outcome support."""
    up = lee_family(sample, nuisance.support, True, augmented)
    lo = lee_family(sample, nuisance.support, False, augmented)
    return _lee(sample, nuisance, level, floor, up, lo, augmented)


def lee_bounds_binary(
    sample: Sample, nuisance: LeeNuisance, level: float = 0.95, floor: float = 1e-3, augmented: bool = True
) -> LeeBounds:
    """Trimming bounds for ``Y`` in {0, 1} via the closed-form two-branch scores."""
    if nuisance.support.tolist() != [0.0, 1.0]:
        raise BadGrid(f"binary Lee bounds need outcome support {{0, 1}}, got {nuisance.support.tolist()}")
    up = lee_binary_family(sample, True, augmented)
    lo = lee_binary_family(sample, False, augmented)
    return _lee(sample, nuisance, level, floor, up, lo, augmented)


# ---------------------------------------------------------------- Roy


@dataclass(frozen=True, eq=False)
class RoyNuisance:
    """Instrument probabilities ``P(Z=z | X)`` and ``P(S=1, D=d | Z=z, X)`` per instrument value."""

    pz: CrossFitNuisance
    s10: CrossFitNuisance
    s01: CrossFitNuisance
    z_labels: tuple

    def as_mapping(self) -> dict:
        return {"pz": self.pz, "s10": self.s10, "s01": self.s01}


def fit_roy_nuisance(sample: Sample, folds: FoldAssignment | None, eps: float = CLIP_EPS) -> RoyNuisance:
    if sample.z is None:
        raise MissingOutcome("Roy bounds need an instrument column z")
    nz = len(sample.z_labels)
    onehot = _col(sample.z) == np.arange(nz)[None, :]
    kw = dict(labels=sample.z_labels)
    pz = cell_mean_fit(sample, onehot.astype(float), folds=folds, probability=True, eps=eps, **kw)
    ds = (sample.d * sample.s).astype(float)
    dns = ((1 - sample.d) * sample.s).astype(float)
    s10 = cell_mean_fit(sample, np.repeat(_col(ds), nz, axis=1), onehot, folds, **kw)
    s01 = cell_mean_fit(sample, np.repeat(_col(dns), nz, axis=1), onehot, folds, **kw)
    return RoyNuisance(pz, s10, s01, sample.z_labels)


def roy_family(sample: Sample, z_labels, which: str = "s10") -> ScoreFamily:
    nz = len(z_labels)
    onehot = (_col(sample.z) == np.arange(nz)[None, :]).astype(float)
    if which == "s10":
        target = (sample.d * sample.s).astype(float)
    else:
        target = ((1 - sample.d) * sample.s).astype(float)

    def signals(nu):
        return _aipw(onehot, nu["pz"], _col(target), nu[which])

    return ScoreFamily(FiniteIndexSet(tuple(z_labels)), signals, lambda nu: nu[which], ("pz", which))


@dataclass(frozen=True)
class RoyBounds:
    bound_10: EnvelopeEstimate
    bound_01: EnvelopeEstimate

    def estimates(self) -> dict:
        return {"bound_10": self.bound_10, "bound_01": self.bound_01}


def _check_overlap(nuisance: RoyNuisance, kappa: float) -> None:
    # only the values evaluated at sample points enter the scores
    lo = float(np.min(nuisance.pz.fitted))
    if lo < kappa:
        raise OverlapViolation(f"fitted instrument probability {lo:g} is below the overlap floor {kappa:g}")


def roy_bounds(sample: Sample, nuisance: RoyNuisance, level: float = 0.95, kappa: float = 0.01) -> RoyBounds:
    """Covariate-assisted upper bounds on ``P(S(1)=1, S(0)=0)`` and ``P(S(1)=0, S(0)=1)``."""
    _check_overlap(nuisance, kappa)
    nu = nuisance.as_mapping()
    b10 = estimate(sample, roy_family(sample, nuisance.z_labels, "s10"), nu, MIN, level)
    b01 = estimate(sample, roy_family(sample, nuisance.z_labels, "s01"), nu, MIN, level)
    return RoyBounds(b10, b01)


def roy_unconditional_bounds(
    sample: Sample, nuisance: RoyNuisance, level: float = 0.95, kappa: float = 0.01
) -> RoyBounds:
    """Basic bounds ``min_z E[s(z, X)]``: the instrument value is chosen once, by the sample means."""
    _check_overlap(nuisance, kappa)
    nu = nuisance.as_mapping()
    folds = folds_of(nu)
    from .envelope import resolve_nuisance

    out = []
    for which in ("s10", "s01"):
        fam = roy_family(sample, nuisance.z_labels, which)
        G = fam.signals(resolve_nuisance(nu, fam.requires))
        j = int(np.argmin(G.mean(axis=0)))
        out.append(summarize_scores(G[:, j], level, folds, np.full(sample.n, j)))
    return RoyBounds(*out)


# ---------------------------------------------------------------- distributional


@dataclass(frozen=True, eq=False)
class ArmCdfNuisance:
    """Propensity and per-arm conditional outcome CDFs on the pooled outcome support."""

    mu1: CrossFitNuisance
    cdf1: ConditionalCdfSurface
    cdf0: ConditionalCdfSurface

    @property
    def support(self) -> np.ndarray:
        return self.cdf1.support

    def as_mapping(self) -> dict:
        return {"mu1": self.mu1, "cdf1": self.cdf1.cdf, "cdf0": self.cdf0.cdf}

    def quantile_bounds(self, tau: float, size: int = 21) -> tuple[np.ndarray, np.ndarray]:
        """Per-observation Makarov bounds ``(Q^L_tau(X_i), Q^U_tau(X_i))`` on grids of ``size`` levels."""
        lo = welfare_surface(self, tau, default_u_grid(tau, False, size), upper=False).max(axis=1)
        hi = welfare_surface(self, tau, default_u_grid(tau, True, size), upper=True).min(axis=1)
        return lo, hi

    def policy(self, tau: float, size: int = 21) -> np.ndarray:
        """First-best worst-case policy ``1{Q^L_tau(X_i) > 0}``."""
        return (self.quantile_bounds(tau, size)[0] > 0).astype(np.int8)


WelfareNuisance = ArmCdfNuisance


def _require_outcomes(sample: Sample) -> None:
    if not np.all(sample.usable_y):
        row = int(np.flatnonzero(~sample.usable_y)[0])
        raise MissingOutcome(f"distributional bounds need the outcome on every row; row {row} has s=0")


def fit_arm_cdf_nuisance(sample: Sample, folds: FoldAssignment | None, eps: float = CLIP_EPS) -> ArmCdfNuisance:
    _require_outcomes(sample)
    mu1 = cell_mean_fit(sample, sample.d.astype(float), folds=folds, probability=True, eps=eps)
    return ArmCdfNuisance(
        mu1,
        fit_conditional_cdf(sample, sample.d == 1, folds),
        fit_conditional_cdf(sample, sample.d == 0, folds),
    )


def _positions(support: np.ndarray, points: np.ndarray, left: bool) -> np.ndarray:
    """Number of support points ``< v`` (left) or ``<= v`` (right), snapping near-hits onto the support."""
    points = np.asarray(points, dtype=float)
    j = np.clip(np.searchsorted(support, points), 0, support.size - 1)
    near = np.abs(support[j] - points) <= _SNAP * (1.0 + np.abs(points))
    j2 = np.clip(j - 1, 0, support.size - 1)
    near2 = np.abs(support[j2] - points) <= _SNAP * (1.0 + np.abs(points))
    snapped = np.where(near, support[j], np.where(near2, support[j2], points))
    return np.searchsorted(support, snapped, side="left" if left else "right")


def _cdf_cols(cdf: np.ndarray, pos: np.ndarray) -> np.ndarray:
    padded = np.concatenate([np.zeros((cdf.shape[0], 1)), cdf], axis=1)
    return padded[:, pos]


def makarov_grid(support: np.ndarray, d: float) -> np.ndarray:
    """Jump points of ``t -> F1(t) - F0(t - d)``: the support and its shift by ``d``."""
    pts = np.concatenate([support, support + d])
    pts = np.sort(pts)
    keep = np.concatenate([[True], np.diff(pts) > _SNAP * (1.0 + np.abs(pts[1:]))])
    return pts[keep]


def makarov_cdf_bounds(sample: Sample, nuisance: ArmCdfNuisance, d: float, level: float = 0.95) -> BoundPair:
    """Sharp bounds on ``P(S(1) - S(0) <= d)``.

    The lower bound maximises ``F1(t) - F0((t-d)-)`` over the jump grid. The
    upper infimum of the same function over the real line is approached just
    to the right of a jump, where ``F0((t-d)-)`` becomes ``F0(t-d)``, so the
    upper bound minimises the right limit ``F1(t) - F0(t-d)`` instead.
    """
    _require_outcomes(sample)
    support = nuisance.support
    grid = makarov_grid(support, d)
    p1 = _positions(support, grid, left=False)
    p0m = _positions(support, grid - d, left=True)
    p0 = _positions(support, grid - d, left=False)
    yi = _col(sample.y_index)
    I1 = (yi < p1[None, :]).astype(float)
    I0m = (yi < p0m[None, :]).astype(float)
    I0 = (yi < p0[None, :]).astype(float)
    dd = _col(sample.d.astype(float))
    ones = np.ones((sample.n, 1))
    zeros = np.zeros((sample.n, 1))

    def parts(nu):
        mu1 = _col(nu["mu1"])
        F1 = _cdf_cols(nu["cdf1"], p1)
        F0m = _cdf_cols(nu["cdf0"], p0m)
        F0 = _cdf_cols(nu["cdf0"], p0)
        g1 = _aipw(dd, mu1, I1, F1)
        g0m = _aipw(1.0 - dd, 1.0 - mu1, I0m, F0m)
        g0 = _aipw(1.0 - dd, 1.0 - mu1, I0, F0)
        return F1, F0m, F0, g1, g0m, g0

    labels = FiniteIndexSet(tuple(grid.tolist()) + (STAR,))
    req = ("mu1", "cdf1", "cdf0")
    lower_fam = ScoreFamily(
        labels,
        lambda nu: np.hstack([(lambda p: p[3] - p[4])(parts(nu)), zeros]),
        lambda nu: np.hstack([(lambda p: p[0] - p[1])(parts(nu)), zeros]),
        req,
    )
    upper_fam = ScoreFamily(
        labels,
        lambda nu: np.hstack([(lambda p: 1.0 + p[3] - p[5])(parts(nu)), ones]),
        lambda nu: np.hstack([(lambda p: 1.0 + p[0] - p[2])(parts(nu)), ones]),
        req,
    )
    nu = nuisance.as_mapping()
    return BoundPair(
        lower=estimate(sample, lower_fam, nu, MAX, level),
        upper=estimate(sample, upper_fam, nu, MIN, level),
    )


def default_u_grid(tau: float, upper: bool = False, size: int = 21) -> np.ndarray:
    """Equispaced quantile levels on ``[0, tau]`` (worst case) or ``[tau, 1]`` (best case)."""
    return np.linspace(tau, 1.0, size) if upper else np.linspace(0.0, tau, size)


def _quantiles(cdf: np.ndarray, support: np.ndarray, levels: np.ndarray) -> np.ndarray:
    idx = quantile_index(cdf[:, None, :], levels[None, :])
    return support[idx]


def welfare_surface(nuisance: ArmCdfNuisance, tau: float, u_grid, upper: bool = False) -> np.ndarray:
    """Per-observation fitted ``Q_u(S(1)|X) - Q_{u - tau + 1}(S(0)|X)`` (or ``Q_{u - tau}`` when ``upper``)."""
    u = np.asarray(u_grid, dtype=float)
    shift = u - tau if upper else u - tau + 1.0
    support = nuisance.support
    q1 = _quantiles(nuisance.cdf1.cdf.fitted, support, u)
    q0 = _quantiles(nuisance.cdf0.cdf.fitted, support, np.clip(shift, 0.0, 1.0))
    return q1 - q0


def worst_case_welfare(
    sample: Sample, nuisance: ArmCdfNuisance, tau: float, u_grid=None, level: float = 0.95
) -> EnvelopeEstimate:
    """Optimal worst-case welfare ``E_X[max(sup_{u in [0,tau]} s(u, X), 0)]`` with plug-in signals."""
    if u_grid is None:
        u_grid = default_u_grid(tau)
    u = np.asarray(u_grid, dtype=float)
    if not (0 < tau < 1) or u.size == 0 or u.min() < 0 or u.max() > tau:
        raise BadGrid(f"worst-case grid must lie in [0, tau] = [0, {tau}]")
    S = np.hstack([welfare_surface(nuisance, tau, u, upper=False), np.zeros((sample.n, 1))])
    fam = ScoreFamily(FiniteIndexSet(tuple(u.tolist()) + (STAR,)), lambda nu: S, lambda nu: S)
    return estimate(sample, fam, nuisance.as_mapping(), MAX, level)


# ---------------------------------------------------------------- saddle (observed signals)


@dataclass(frozen=True, eq=False)
class SignalNuisance:
    """Cell means of observed signals ``g_{kappa,t}(W) = table[kappa, t, Y]``."""

    means: CrossFitNuisance
    table: np.ndarray

    def as_mapping(self) -> dict:
        return {"signal_means": self.means}


def table_signals(sample: Sample, table) -> np.ndarray:
    table = np.asarray(table, dtype=float)
    if np.any(sample.y_index < 0):
        raise MissingOutcome("signal tables need the outcome on every row")
    return np.moveaxis(table[:, :, sample.y_index], -1, 0)


def fit_signal_nuisance(sample: Sample, folds: FoldAssignment | None, table) -> SignalNuisance:
    G = table_signals(sample, table)
    means = cell_mean_fit(sample, G.reshape(sample.n, -1), folds=folds)
    return SignalNuisance(means, np.asarray(table, dtype=float))


def saddle_value(sample: Sample, nuisance: SignalNuisance, level: float = 0.95):
    from .saddle import estimate_saddle, observed_saddle_family

    fam = observed_saddle_family(table_signals(sample, nuisance.table))
    return estimate_saddle(sample, fam, nuisance.as_mapping(), level)


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class Application:
    """``fit(sample, folds, params)`` builds a nuisance; ``run(sample, nuisance, level, params)`` estimates."""

    name: str
    fit: Callable
    run: Callable
    targets: tuple[str, ...]


def _tau(params) -> float:
    return float(params.get("tau", 0.5))


def _ugrid(params, upper: bool):
    if "u_grid" in params and params["u_grid"] is not None:
        return np.asarray(params["u_grid"], dtype=float)
    return default_u_grid(_tau(params), upper, int(params.get("ugrid", 21)))


def _best(sample, nu, level, params):
    from .saddle import best_case_welfare

    return {"value": best_case_welfare(sample, nu, _tau(params), _ugrid(params, True), level)}


APPLICATIONS: dict[str, Application] = {
    "frechet": Application(
        "frechet",
        lambda sample, folds, params: fit_frechet_nuisance(sample, folds),
        lambda sample, nu, level, params: frechet_bounds(sample, nu, level).estimates(),
        ("lower", "upper"),
    ),
    "lee_binary": Application(
        "lee_binary",
        lambda sample, folds, params: fit_lee_nuisance(sample, folds),
        lambda sample, nu, level, params: lee_bounds_binary(sample, nu, level).estimates(),
        ("lower", "upper", "numerator_lower", "numerator_upper", "denominator"),
    ),
    "lee_discrete": Application(
        "lee_discrete",
        lambda sample, folds, params: fit_lee_nuisance(sample, folds),
        lambda sample, nu, level, params: lee_bounds_discrete(sample, nu, level).estimates(),
        ("lower", "upper", "numerator_lower", "numerator_upper", "denominator"),
    ),
    "roy": Application(
        "roy",
        lambda sample, folds, params: fit_roy_nuisance(sample, folds),
        lambda sample, nu, level, params: roy_bounds(sample, nu, level).estimates(),
        ("bound_10", "bound_01"),
    ),
    "makarov": Application(
        "makarov",
        lambda sample, folds, params: fit_arm_cdf_nuisance(sample, folds),
        lambda sample, nu, level, params: makarov_cdf_bounds(sample, nu, float(params.get("d", 0.0)), level).estimates(),
        ("lower", "upper"),
    ),
    "welfare_worst": Application(
        "welfare_worst",
        lambda sample, folds, params: fit_arm_cdf_nuisance(sample, folds),
        lambda sample, nu, level, params: {
            "value": worst_case_welfare(sample, nu, _tau(params), _ugrid(params, False), level)
        },
        ("value",),
    ),
    "welfare_best": Application(
        "welfare_best",
        lambda sample, folds, params: fit_arm_cdf_nuisance(sample, folds),
        _best,
        ("value",),
    ),
    "saddle": Application(
        "saddle",
        lambda sample, folds, params: fit_signal_nuisance(sample, folds, params["signal_table"]),
        lambda sample, nu, level, params: {"value": saddle_value(sample, nu, level)},
        ("value",),
    ),
}


def get_application(name: str) -> Application:
    try:
        return APPLICATIONS[name]
    except KeyError:
        raise UnsupportedApplication(f"unknown application {name!r}; choose from {sorted(APPLICATIONS)}") from None


def run_application(
    name: str, sample: Sample, folds: FoldAssignment | None, level: float = 0.95, params: dict | None = None
) -> dict:
    """Fit the application's nuisance on ``folds`` and return ``{target: estimate}``."""
    params = params or {}
    app = get_application(name)
    return app.run(sample, app.fit(sample, folds, params), level, params)
