"""Discrete data-generating processes with exact targets, and Monte Carlo harnesses.

Three DGP kinds are supported:

``treatment``
    ``X ~ x_probs``; ``D | X ~ Bernoulli(propensity)``; a selection type
    ``(S(1), S(0))`` drawn from ``selection_types[x]`` over the order
    ``(1,1), (1,0), (0,1), (0,0)``; ``S = S(D)``. Outcomes on ``outcome_support``:
    ``Y(1)`` follows ``y1_law`` for always-selected units and
    ``y1_law_complier`` for units of type ``(1,0)``; ``Y(0)`` follows ``y0_law``.
``roy``
    ``Z | X ~ z_probs``; types as above, independent of ``Z`` given ``X``;
    ``D = 1{S(1) > S(0)}``, ties broken towards treatment with probability
    ``tie_treat_prob[x, z]``.
``signals``
    ``Y | X ~ y_law`` and observed signals ``g_{kappa,t} = signal_table[kappa, t, Y]``.

Every population target is computed by exact enumeration over cells.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import apps as A
from .core import DiscreteDistribution, Sample, Schema, make_folds
from .cvar import cvar_lower_direct, cvar_upper_direct
from .errors import ConfigError, EnvelopeError, MarginViolation, UnsupportedApplication
from .first_stage import ConditionalCdfSurface, CrossFitNuisance
from .saddle import find_saddle

KINDS = ("treatment", "roy", "signals")
TYPES = np.array([[1, 1], [1, 0], [0, 1], [0, 0]], dtype=np.int8)
_PROB_TOL = 1e-9
_ARRAYS = (
    "x_probs",
    "propensity",
    "selection_types",
    "outcome_support",
    "y1_law",
    "y1_law_complier",
    "y0_law",
    "z_probs",
    "tie_treat_prob",
    "signal_table",
    "y_law",
)


def _prob_rows(name: str, a: np.ndarray, C: int | None = None) -> None:
    if np.any(a < -_PROB_TOL) or np.any(a > 1 + _PROB_TOL):
        raise ConfigError(f"{name} has entries outside [0, 1]")
    if np.any(np.abs(a.sum(axis=-1) - 1.0) > _PROB_TOL):
        raise ConfigError(f"rows of {name} must sum to 1")
    if C is not None and a.shape[0] != C:
        raise ConfigError(f"{name} needs one row per covariate cell ({C}), got {a.shape[0]}")


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Finite DGP; see the module docstring for the meaning of each table.

    ``margin`` is the minimum runner-up gap the spec promises for the
    applications it is used with (checked by :func:`check_margin`); 0 skips
    the check.
    """

    kind: str
    x_probs: np.ndarray
    propensity: np.ndarray | None = None
    selection_types: np.ndarray | None = None
    outcome_support: np.ndarray | None = None
    y1_law: np.ndarray | None = None
    y1_law_complier: np.ndarray | None = None
    y0_law: np.ndarray | None = None
    z_probs: np.ndarray | None = None
    tie_treat_prob: np.ndarray | None = None
    signal_table: np.ndarray | None = None
    y_law: np.ndarray | None = None
    margin: float = 0.0
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        for f in _ARRAYS:
            v = getattr(self, f)
            if v is not None:
                v = np.array(v, dtype=float)
                v.setflags(write=False)
                object.__setattr__(self, f, v)
        self.validate()

    @property
    def n_cells(self) -> int:
        return self.x_probs.size

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown DGP kind {self.kind!r}")
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        C = self.n_cells
        _prob_rows("x_probs", self.x_probs)
        need = {
            "treatment": ("propensity", "selection_types"),
            "roy": ("selection_types", "z_probs", "tie_treat_prob"),
            "signals": ("signal_table", "y_law", "outcome_support"),
        }[self.kind]
        for f in need:
            if getattr(self, f) is None:
                raise ConfigError(f"{self.kind} DGP needs {f}")
        if self.propensity is not None and (self.propensity.shape != (C,) or np.any((self.propensity < 0) | (self.propensity > 1))):
            raise ConfigError("propensity must be a length-C vector in [0, 1]")
        if self.selection_types is not None:
            if self.selection_types.shape != (C, 4):
                raise ConfigError("selection_types must have shape (C, 4)")
            _prob_rows("selection_types", self.selection_types)
        if self.outcome_support is not None:
            sup = self.outcome_support
            if sup.ndim != 1 or sup.size == 0 or np.any(np.diff(sup) <= 0):
                raise ConfigError("outcome_support must be strictly increasing")
        for f in ("y1_law", "y1_law_complier", "y0_law", "y_law"):
            v = getattr(self, f)
            if v is not None:
                if self.outcome_support is None or v.shape != (C, self.outcome_support.size):
                    raise ConfigError(f"{f} must have shape (C, |outcome_support|)")
                _prob_rows(f, v, C)
        if self.z_probs is not None:
            _prob_rows("z_probs", self.z_probs, C)
            if self.tie_treat_prob is None or self.tie_treat_prob.shape != self.z_probs.shape:
                raise ConfigError("tie_treat_prob must match z_probs in shape")
            if np.any((self.tie_treat_prob < 0) | (self.tie_treat_prob > 1)):
                raise ConfigError("tie_treat_prob must lie in [0, 1]")
        if self.signal_table is not None:
            if self.signal_table.ndim != 3 or self.signal_table.shape[2] != self.outcome_support.size:
                raise ConfigError("signal_table must have shape (|K|, |T|, |outcome_support|)")

    # ---- derived population quantities

    @property
    def s1(self) -> np.ndarray:
        """``P(S(1) = 1 | X)`` per cell."""
        return self.selection_types[:, 0] + self.selection_types[:, 1]

    @property
    def s0(self) -> np.ndarray:
        """``P(S(0) = 1 | X)`` per cell."""
        return self.selection_types[:, 0] + self.selection_types[:, 2]

    def selected_law(self) -> np.ndarray:
        """Law of ``Y | D=1, S=1, X`` per cell (mixture of always-selected and type ``(1,0)``)."""
        p11 = self.selection_types[:, :1]
        p10 = self.selection_types[:, 1:2]
        comp = self.y1_law if self.y1_law_complier is None else self.y1_law_complier
        s1 = p11 + p10
        mix = np.divide(p11 * self.y1_law + p10 * comp, s1, out=self.y1_law.copy(), where=s1 > 0)
        return mix

    def roy_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """``P(S=1, D=1 | Z, X)`` and ``P(S=1, D=0 | Z, X)``, each ``(C, |Z|)``."""
        p = self.selection_types
        q = self.tie_treat_prob
        return p[:, 1:2] + p[:, :1] * q, p[:, 2:3] + p[:, :1] * (1.0 - q)

    def signal_means(self) -> np.ndarray:
        """Exact ``s(kappa, t, x)`` with shape ``(C, |K|, |T|)``."""
        return np.einsum("kty,cy->ckt", self.signal_table, self.y_law)

    # ---- JSON

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "margin": self.margin, "seed": self.seed, "name": self.name}
        for f in _ARRAYS:
            v = getattr(self, f)
            if v is not None:
                out[f] = v.tolist()
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=1)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "DgpSpec":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown DGP spec fields: {sorted(extra)}")
        if "kind" not in data or "x_probs" not in data:
            raise ConfigError("DGP spec needs 'kind' and 'x_probs'")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "DgpSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read DGP spec {path}: {exc}") from None
        return cls.from_dict(data)


# ---------------------------------------------------------------- sampling


def _categorical(rng: np.random.Generator, probs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """One draw per row from ``probs[rows]`` (rows of a probability table)."""
    cum = np.cumsum(probs, axis=1)[rows]
    u = rng.random(rows.size)
    return np.minimum((u[:, None] >= cum).sum(axis=1), probs.shape[1] - 1)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate(spec: DgpSpec, n: int, seed=0) -> Sample:
    """I.i.d. draws from ``spec``. ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``."""
    if n < 0:
        raise ConfigError("n must be non-negative")
    rng = _rng(seed)
    C = spec.n_cells
    x = _categorical(rng, spec.x_probs[None, :], np.zeros(n, dtype=np.intp))
    support = spec.outcome_support
    z = None
    if spec.kind == "signals":
        yi = _categorical(rng, spec.y_law, x)
        d = np.ones(n, dtype=np.int8)
        s = np.ones(n, dtype=np.int8)
        y = support[yi]
    else:
        types = TYPES[_categorical(rng, spec.selection_types, x)]
        S1, S0 = types[:, 0], types[:, 1]
        if spec.kind == "treatment":
            d = (rng.random(n) < spec.propensity[x]).astype(np.int8)
        else:
            z = _categorical(rng, spec.z_probs, x)
            tie = rng.random(n) < spec.tie_treat_prob[x, z]
            d = np.where(S1 > S0, 1, np.where(S1 < S0, 0, tie)).astype(np.int8)
        s = np.where(d == 1, S1, S0).astype(np.int8)
        if spec.y1_law is not None:
            y1 = _categorical(rng, spec.y1_law, x)
            comp = spec.y1_law if spec.y1_law_complier is None else spec.y1_law_complier
            y1c = _categorical(rng, comp, x)
            y1 = np.where((S1 == 1) & (S0 == 0), y1c, y1)
            y0 = _categorical(rng, spec.y1_law if spec.y0_law is None else spec.y0_law, x)
            y = support[np.where(d == 1, y1, y0)]
        else:
            y = np.zeros(n)
            support = np.zeros(1)
    y = np.where(s == 1, y, np.nan)
    schema = Schema(
        x_support=tuple(range(C)),
        z_support=None if spec.z_probs is None else tuple(range(spec.z_probs.shape[1])),
        y_support=tuple(np.asarray(support).tolist()),
    )
    return Sample.from_arrays(d, s, y, x, z, schema=schema, allow_empty=True)


# ---------------------------------------------------------------- exact targets


def _quantile(pmf: np.ndarray, support: np.ndarray, u: float) -> float:
    """Left-inverse with ``u <= 0`` read as the smallest atom (scalar reference code)."""
    acc = 0.0
    for p, y in zip(pmf, support):
        acc += p
        if (u <= 0 and p > 0) or (u > 0 and acc >= u - 1e-12):
            return float(y)
    return float(support[-1])


def _cdf_point(pmf: np.ndarray, support: np.ndarray, v: float, strict: bool) -> float:
    tol = 1e-9 * (1.0 + abs(v))
    if strict:
        return float(sum(p for p, y in zip(pmf, support) if y < v - tol))
    return float(sum(p for p, y in zip(pmf, support) if y <= v + tol))


def _makarov_cell(p1, p0, support, d) -> tuple[float, float]:
    grid = A.makarov_grid(support, d)
    lo = max([_cdf_point(p1, support, t, False) - _cdf_point(p0, support, t - d, True) for t in grid] + [0.0])
    hi = min([1.0 + _cdf_point(p1, support, t, False) - _cdf_point(p0, support, t - d, False) for t in grid] + [1.0])
    return lo, hi


def _welfare_cells(spec: DgpSpec, tau: float, grid, upper: bool) -> np.ndarray:
    sup = spec.outcome_support
    y0 = spec.y1_law if spec.y0_law is None else spec.y0_law
    out = np.empty(spec.n_cells)
    for c in range(spec.n_cells):
        if upper:
            vals = [_quantile(spec.y1_law[c], sup, u) - _quantile(y0[c], sup, u - tau) for u in grid]
            out[c] = max(min(vals), 0.0)
        else:
            vals = [_quantile(spec.y1_law[c], sup, u) - _quantile(y0[c], sup, u - tau + 1.0) for u in grid]
            out[c] = max(max(vals), 0.0)
    return out


def _lee_cells(spec: DgpSpec, binary: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s1, s0 = spec.s1, spec.s0
    law = spec.selected_law()
    sup = spec.outcome_support
    nl = np.zeros(spec.n_cells)
    nu = np.zeros(spec.n_cells)
    for c in range(spec.n_cells):
        if s0[c] <= 0:
            continue
        if binary:
            pY = law[c, 1]
            nu[c] = min(s1[c] * pY, s0[c])
            nl[c] = max(0.0, s0[c] - s1[c] * (1.0 - pY))
            continue
        alpha = min(s0[c] / s1[c], 1.0)
        keep = law[c] > 0
        dist = DiscreteDistribution(sup[keep], law[c, keep] / law[c, keep].sum())
        nu[c] = s0[c] * cvar_upper_direct(dist, alpha).value
        nl[c] = s0[c] * cvar_lower_direct(dist, alpha).value
    return nl, nu, s0


def _u_grid(params: dict, upper: bool) -> np.ndarray:
    return A._ugrid(params, upper)


def true_psi(spec: DgpSpec, application: str, params: dict | None = None) -> dict[str, float]:
    """Exact population targets ``{target: value}`` by enumerating covariate cells."""
    params = params or {}
    w = spec.x_probs
    if application not in A.APPLICATIONS:
        raise UnsupportedApplication(f"no exact target for application {application!r}")
    kind_needed = {"roy": "roy", "saddle": "signals"}.get(application, "treatment")
    if spec.kind != kind_needed:
        raise UnsupportedApplication(f"application {application!r} needs a {kind_needed} DGP, got {spec.kind}")
    if application == "frechet":
        s1, s0 = spec.s1, spec.s0
        return {"lower": float(w @ np.maximum(s1 + s0 - 1.0, 0.0)), "upper": float(w @ np.minimum(s1, s0))}
    if application in ("lee_binary", "lee_discrete"):
        nl, nu, s0 = _lee_cells(spec, application == "lee_binary")
        den = float(w @ s0)
        NL, NU = float(w @ nl), float(w @ nu)
        return {
            "lower": NL / den,
            "upper": NU / den,
            "numerator_lower": NL,
            "numerator_upper": NU,
            "denominator": den,
        }
    if application == "roy":
        s10, s01 = spec.roy_tables()
        return {"bound_10": float(w @ s10.min(axis=1)), "bound_01": float(w @ s01.min(axis=1))}
    if application == "makarov":
        d = float(params.get("d", 0.0))
        y0 = spec.y1_law if spec.y0_law is None else spec.y0_law
        cells = np.array([_makarov_cell(spec.y1_law[c], y0[c], spec.outcome_support, d) for c in range(spec.n_cells)])
        return {"lower": float(w @ cells[:, 0]), "upper": float(w @ cells[:, 1])}
    tau = float(params.get("tau", 0.5))
    if application == "welfare_worst":
        return {"value": float(w @ _welfare_cells(spec, tau, _u_grid(params, False), False))}
    if application == "welfare_best":
        return {"value": float(w @ _welfare_cells(spec, tau, _u_grid(params, True), True))}
    M = spec.signal_means()
    return {"value": float(sum(wc * find_saddle(M[c]).value for c, wc in enumerate(w)))}


def roy_unconditional_truth(spec: DgpSpec) -> dict[str, float]:
    """Exact unconditional bounds ``min_z E[s(z, X)]``."""
    s10, s01 = spec.roy_tables()
    w = spec.x_probs
    return {"bound_10": float((w @ s10).min()), "bound_01": float((w @ s01).min())}


def true_nuisance(spec: DgpSpec, application: str, sample: Sample, params: dict | None = None):
    """The application's nuisance object built from the exact cell tables (the oracle)."""
    params = params or {}
    known = CrossFitNuisance.known
    if application == "roy":
        s10, s01 = spec.roy_tables()
        return A.RoyNuisance(known(spec.z_probs, sample), known(s10, sample), known(s01, sample), sample.z_labels)
    if application == "saddle":
        C = spec.n_cells
        return A.SignalNuisance(known(spec.signal_means().reshape(C, -1), sample), spec.signal_table)
    mu1 = known(spec.propensity, sample)
    if application == "frechet":
        return A.BinaryArmNuisance(mu1, known(spec.s1, sample), known(spec.s0, sample))
    if application in ("lee_binary", "lee_discrete"):
        sup = spec.outcome_support
        return A.LeeNuisance(mu1, known(spec.s1, sample), known(spec.s0, sample), known(spec.selected_law(), sample), sup)
    if application in ("makarov", "welfare_worst", "welfare_best"):
        sup = spec.outcome_support
        y0 = spec.y1_law if spec.y0_law is None else spec.y0_law
        cdf1 = np.cumsum(spec.y1_law, axis=1)
        cdf0 = np.cumsum(y0, axis=1)
        cdf1[:, -1] = 1.0
        cdf0[:, -1] = 1.0
        return A.ArmCdfNuisance(
            mu1, ConditionalCdfSurface(sup, known(cdf1, sample)), ConditionalCdfSurface(sup, known(cdf0, sample))
        )
    raise UnsupportedApplication(f"no oracle nuisance for application {application!r}")


# ---------------------------------------------------------------- margins


def _gap(values: np.ndarray, direction: str) -> np.ndarray:
    """Runner-up gap per row, ignoring labels exactly tied with the optimum."""
    v = values if direction == "min" else -values
    best = v.min(axis=1, keepdims=True)
    others = np.where(v > best + 1e-12, v, np.inf)
    return others.min(axis=1) - best[:, 0]


def spec_margin(spec: DgpSpec, application: str, params: dict | None = None) -> float:
    """Smallest runner-up gap of the population classification problem over cells.

    For plug-in welfare the relevant margin is instead the distance between
    the cell CDF values and the quantile levels queried.
    """
    params = params or {}
    C = spec.n_cells
    if application == "frechet":
        s1, s0 = spec.s1, spec.s0
        up = _gap(np.column_stack([s1, s0]), "min")
        lo = _gap(np.column_stack([s1 + s0 - 1.0, np.zeros(C)]), "max")
        return float(min(up.min(), lo.min()))
    if application in ("lee_binary", "lee_discrete"):
        beta = spec.outcome_support
        law = spec.selected_law()
        gaps = []
        for kink, direction in ((np.maximum, "min"), (np.minimum, "max")):
            P = kink(beta[:, None] - beta[None, :], 0.0)
            R = beta[None, :] * spec.s0[:, None] + spec.s1[:, None] * (law @ P)
            gaps.append(_gap(R, direction).min())
        return float(min(gaps))
    if application == "roy":
        s10, s01 = spec.roy_tables()
        return float(min(_gap(s10, "min").min(), _gap(s01, "min").min()))
    if application == "makarov":
        d = float(params.get("d", 0.0))
        sup = spec.outcome_support
        y0 = spec.y1_law if spec.y0_law is None else spec.y0_law
        grid = A.makarov_grid(sup, d)
        gaps = []
        for c in range(C):
            lo = [_cdf_point(spec.y1_law[c], sup, t, False) - _cdf_point(y0[c], sup, t - d, True) for t in grid]
            hi = [1.0 + _cdf_point(spec.y1_law[c], sup, t, False) - _cdf_point(y0[c], sup, t - d, False) for t in grid]
            gaps.append(_gap(np.array([lo + [0.0]]), "max")[0])
            gaps.append(_gap(np.array([hi + [1.0]]), "min")[0])
        return float(min(gaps))
    if application in ("welfare_worst", "welfare_best"):
        tau = float(params.get("tau", 0.5))
        upper = application == "welfare_best"
        u = _u_grid(params, upper)
        levels = np.concatenate([u, u - tau if upper else u - tau + 1.0])
        y0 = spec.y1_law if spec.y0_law is None else spec.y0_law
        F = np.concatenate([np.cumsum(spec.y1_law, axis=1), np.cumsum(y0, axis=1)]).ravel()
        F = F[(F > 1e-12) & (F < 1 - 1e-12)]
        if F.size == 0:
            return float("inf")
        return float(np.min(np.abs(F[:, None] - levels[None, :])))
    if application == "saddle":
        M = spec.signal_means()
        gaps = []
        for c in range(C):
            cell = find_saddle(M[c])
            row = np.delete(M[c, cell.kappa], cell.t)
            col = np.delete(M[c, :, cell.t], cell.kappa)
            gaps.append(min(np.min(row - cell.value, initial=np.inf), np.min(cell.value - col, initial=np.inf)))
        return float(min(gaps))
    raise UnsupportedApplication(f"no margin definition for application {application!r}")


def check_margin(spec: DgpSpec, application: str, params: dict | None = None) -> float:
    """Raise :class:`MarginViolation` if the spec's promised margin does not hold."""
    m = spec_margin(spec, application, params)
    if spec.margin > 0 and m < spec.margin:
        raise MarginViolation(f"{application}: runner-up gap {m:.4g} is below the margin knob {spec.margin:g}")
    return m


# ---------------------------------------------------------------- reference DGPs


def _dirichlet_rows(rng, C, m, conc=2.0):
    return rng.dirichlet(np.full(m, conc), size=C)


def _cells_until(draw, accept, C, rng, max_tries=100_000):
    rows = []
    tries = 0
    while len(rows) < C:
        tries += 1
        if tries > max_tries:
            raise ConfigError("could not construct cells satisfying the margin")
        cand = draw(rng)
        if accept(cand):
            rows.append(cand)
    return rows


def frechet_spec(C: int = 10, margin: float = 0.1, seed: int = 0) -> DgpSpec:
    rng = np.random.default_rng(seed)

    def accept(t):
        s1, s0 = t[0] + t[1], t[0] + t[2]
        return abs(s1 - s0) >= margin and abs(s1 + s0 - 1.0) >= margin

    types = _cells_until(lambda r: r.dirichlet(np.full(4, 2.0)), accept, C, rng)
    return DgpSpec(
        "treatment",
        x_probs=rng.dirichlet(np.full(C, 8.0)),
        propensity=rng.uniform(0.3, 0.7, C),
        selection_types=np.array(types),
        margin=margin,
        seed=seed,
        name="frechet",
    )


def lee_spec(
    C: int = 10,
    support=(0.0, 1.0, 2.0, 3.0),
    margin: float = 0.1,
    seed: int = 0,
    compliers: bool = True,
) -> DgpSpec:
    """Monotone selection (no ``(0,1)`` type). ``compliers=False`` gives ``s1 == s0``."""
    rng = np.random.default_rng(seed)
    support = np.asarray(support, dtype=float)
    m = support.size
    beta = support

    def draw(r):
        p11 = r.uniform(0.35, 0.65)
        p10 = r.uniform(0.1, 0.3) if compliers else 0.0
        return np.concatenate([[p11, p10, 0.0, 1.0 - p11 - p10], r.dirichlet(np.full(m, 2.0)), r.dirichlet(np.full(m, 2.0))])

    def accept(row):
        if margin <= 0:
            return True
        p11, p10 = row[0], row[1]
        law = (p11 * row[4 : 4 + m] + p10 * row[4 + m :]) / (p11 + p10)
        s1, s0 = p11 + p10, p11
        ok = True
        for kink, direction in ((np.maximum, "min"), (np.minimum, "max")):
            P = kink(beta[:, None] - beta[None, :], 0.0)
            R = (beta * s0 + s1 * (law @ P))[None, :]
            ok &= bool(_gap(R, direction)[0] >= margin)
        return ok

    rows = np.array(_cells_until(draw, accept, C, rng))
    return DgpSpec(
        "treatment",
        x_probs=rng.dirichlet(np.full(C, 8.0)),
        propensity=rng.uniform(0.3, 0.7, C),
        selection_types=rows[:, :4],
        outcome_support=support,
        y1_law=rows[:, 4 : 4 + m],
        y1_law_complier=rows[:, 4 + m :],
        y0_law=rows[:, 4 : 4 + m],
        margin=margin,
        seed=seed,
        name="lee" if compliers else "lee_no_compliers",
    )


def roy_spec(C: int = 10, n_z: int = 2, margin: float = 0.1, seed: int = 0) -> DgpSpec:
    """Roy DGP whose minimising instrument value changes across cells."""
    rng = np.random.default_rng(seed)

    def draw(r):
        t = r.dirichlet(np.full(4, 2.0))
        t = 0.5 * t + 0.5 * np.array([1.0, 0.0, 0.0, 0.0])  # enough ties for instrument variation
        return np.concatenate([t, r.uniform(0.05, 0.95, n_z)])

    def accept(row):
        t, q = row[:4], row[4:]
        s10 = t[1] + t[0] * q
        s01 = t[2] + t[0] * (1 - q)
        return bool(_gap(s10[None], "min")[0] >= margin and _gap(s01[None], "min")[0] >= margin)

    rows = np.array(_cells_until(draw, accept, C, rng))
    # alternate which instrument value minimises s10 so the bound is x-dependent
    q = rows[:, 4:]
    for c in range(C):
        order = np.sort(q[c])
        q[c] = order[::-1] if c % 2 == 0 else order
    return DgpSpec(
        "roy",
        x_probs=rng.dirichlet(np.full(C, 20.0)),
        selection_types=rows[:, :4],
        z_probs=0.5 * rng.dirichlet(np.full(n_z, 20.0), size=C) + 0.5 / n_z,
        tie_treat_prob=q,
        margin=margin,
        seed=seed,
        name="roy",
    )


def makarov_spec(C: int = 10, support=(0.0, 1.0, 2.0), d: float = 1.0, margin: float = 0.1, seed: int = 0) -> DgpSpec:
    rng = np.random.default_rng(seed)
    support = np.asarray(support, dtype=float)
    m = support.size

    def accept(row):
        spec = DgpSpec("treatment", np.ones(1), np.full(1, 0.5), np.array([[1.0, 0, 0, 0]]), support, row[None, :m], None, row[None, m:])
        return spec_margin(spec, "makarov", {"d": d}) >= margin

    rows = np.array(
        _cells_until(lambda r: np.concatenate([r.dirichlet(np.full(m, 2.0)), r.dirichlet(np.full(m, 2.0))]), accept, C, rng)
    )
    return DgpSpec(
        "treatment",
        x_probs=rng.dirichlet(np.full(C, 8.0)),
        propensity=rng.uniform(0.3, 0.7, C),
        selection_types=np.tile([1.0, 0.0, 0.0, 0.0], (C, 1)),
        outcome_support=support,
        y1_law=rows[:, :m],
        y0_law=rows[:, m:],
        margin=margin,
        seed=seed,
        name="makarov",
    )


def welfare_spec(
    C: int = 10,
    support=(-1.0, 0.0, 1.0, 2.0),
    tau: float = 0.5,
    ugrid: int = 2,
    margin: float = 0.15,
    seed: int = 0,
    degenerate_control: float | None = None,
) -> DgpSpec:
    """Welfare DGP whose cell CDFs stay ``margin`` away from every queried quantile level.

    ``degenerate_control`` puts ``S(0)`` at that support point in every cell.
    Treated outcomes avoid the bottom support point and control outcomes the
    top one, so the worst-case value is not identically zero.
    """
    rng = np.random.default_rng(seed)
    support = np.asarray(support, dtype=float)
    m = support.size
    params = {"tau": tau, "ugrid": ugrid}

    tilt = np.linspace(1.0, 3.0, m - 1)

    def law1(r):
        return np.concatenate([[0.0], r.dirichlet(tilt)])

    def law0(r):
        if degenerate_control is None:
            return np.concatenate([r.dirichlet(tilt[::-1]), [0.0]])
        return (support == degenerate_control).astype(float)

    def accept(row):
        spec = DgpSpec("treatment", np.ones(1), np.full(1, 0.5), np.array([[1.0, 0, 0, 0]]), support, row[None, :m], None, row[None, m:])
        return min(spec_margin(spec, "welfare_worst", params), spec_margin(spec, "welfare_best", params)) >= margin

    rows = np.array(_cells_until(lambda r: np.concatenate([law1(r), law0(r)]), accept, C, rng))
    return DgpSpec(
        "treatment",
        x_probs=rng.dirichlet(np.full(C, 8.0)),
        propensity=rng.uniform(0.3, 0.7, C),
        selection_types=np.tile([1.0, 0.0, 0.0, 0.0], (C, 1)),
        outcome_support=support,
        y1_law=rows[:, :m],
        y0_law=rows[:, m:],
        margin=margin,
        seed=seed,
        name="welfare" if degenerate_control is None else "welfare_degenerate_control",
    )


def planted_saddle_matrix(rng: np.random.Generator, n_kappa: int, n_t: int, gap: float = 0.1) -> tuple[np.ndarray, tuple[int, int]]:
    """Random matrix with a unique pure saddle separated by at least ``gap`` in its row and column."""
    M = rng.uniform(-1.0, 1.0, (n_kappa, n_t))
    k, t = int(rng.integers(n_kappa)), int(rng.integers(n_t))
    v = rng.uniform(-0.5, 0.5)
    M[k, t] = v
    row = np.arange(n_t) != t
    col = np.arange(n_kappa) != k
    M[k, row] = v + gap + rng.uniform(0.0, 0.5, row.sum())
    M[col, t] = v - gap - rng.uniform(0.0, 0.5, col.sum())
    return M, (k, t)


def saddle_spec(
    C: int = 6, n_kappa: int = 3, n_t: int = 3, mix: float = 0.2, margin: float = 0.1, gap: float = 0.25, seed: int = 0
) -> DgpSpec:
    """Observed-signal DGP with a planted saddle in every cell.

    ``Y`` has ``C`` support points and ``Y | X=c`` puts mass ``1 - mix + mix/C``
    on point ``c``. Inverting this mixing matrix turns any per-cell target
    matrices into a signal table whose cell means are exactly those targets.
    Saddles are planted with separation ``gap`` (at least ``margin``).
    """
    rng = np.random.default_rng(seed)
    targets = np.stack([planted_saddle_matrix(rng, n_kappa, n_t, max(gap, margin))[0] for _ in range(C)])
    P = (1.0 - mix) * np.eye(C) + mix / C
    table = np.einsum("yc,ckt->kty", np.linalg.inv(P), targets)
    return DgpSpec(
        "signals",
        x_probs=rng.dirichlet(np.full(C, 8.0)),
        outcome_support=np.arange(C, dtype=float),
        signal_table=table,
        y_law=P,
        margin=margin,
        seed=seed,
        name="saddle",
    )


def reference_spec(application: str, seed: int = 0) -> tuple[DgpSpec, dict]:
    """Margin-separated reference DGP and default parameters for each application."""
    if application == "frechet":
        return frechet_spec(margin=0.15, seed=seed), {}
    if application == "lee_binary":
        return lee_spec(support=(0.0, 1.0), margin=0.15, seed=seed), {}
    if application == "lee_discrete":
        return lee_spec(margin=0.15, seed=seed), {}
    if application == "roy":
        return roy_spec(margin=0.15, seed=seed), {}
    if application == "makarov":
        return makarov_spec(seed=seed), {"d": 1.0}
    if application in ("welfare_worst", "welfare_best"):
        return welfare_spec(seed=seed), {"tau": 0.5, "ugrid": 2}
    if application == "saddle":
        spec = saddle_spec(gap=0.6, seed=seed)
        return spec, {"signal_table": spec.signal_table}
    raise UnsupportedApplication(f"no reference DGP for application {application!r}")


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True, eq=False)
class McReport:
    """Monte Carlo summary for one target of one application.

    ``runtime`` is wall-clock seconds for the whole run; it is kept out of
    :meth:`record` so reports are reproducible byte for byte.
    """

    application: str
    target: str
    reps: int
    n: int
    K: int
    level: float
    seed: int
    truth: float
    mean_psi: float
    bias: float
    mc_sd: float
    mean_se: float
    coverage: float
    mean_abs_oracle_gap: float | None
    estimates: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)
    oracle_gaps: np.ndarray | None = field(default=None, repr=False)
    runtime: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("a report needs at least one rep")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")

    @property
    def bias_mc_se(self) -> float:
        """Monte Carlo standard error of the mean estimate."""
        return self.mc_sd / np.sqrt(self.reps)

    def record(self) -> dict:
        keep = (
            "application", "target", "reps", "n", "K", "level", "seed", "truth",
            "mean_psi", "bias", "mc_sd", "mean_se", "coverage", "mean_abs_oracle_gap",
        )
        return {k: getattr(self, k) for k in keep}


REPORT_COLUMNS = tuple(McReport.__dataclass_fields__)[:14]


def reports_to_json(reports: dict[str, McReport]) -> str:
    return json.dumps({k: r.record() for k, r in sorted(reports.items())}, sort_keys=True, indent=1)


def reports_to_csv_rows(reports: dict[str, McReport]) -> list[list]:
    rows = [list(REPORT_COLUMNS)]
    for _, r in sorted(reports.items()):
        rec = r.record()
        rows.append([rec[c] for c in REPORT_COLUMNS])
    return rows


def rep_seeds(seed: int, rep: int) -> tuple[np.random.SeedSequence, int]:
    """Data stream and fold seed for one rep, derived only from ``(seed, rep)``."""
    ss = np.random.SeedSequence([seed, rep])
    data, fold = ss.spawn(2)
    return data, int(fold.generate_state(1)[0])


def default_workers() -> int:
    raw = os.environ.get("ENVELOPE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"ENVELOPE_THREADS must be a positive integer, got {raw!r}") from None


def run_rep(spec, application, n, rep, seed, K, level, params, oracle):
    """One Monte Carlo draw: ``{target: (psi, se, covered_truth_flag_inputs, oracle_psi)}``."""
    data_seed, fold_seed = rep_seeds(seed, rep)
    sample = simulate(spec, n, data_seed)
    folds = make_folds(n, K, fold_seed)
    app = A.get_application(application)
    est = app.run(sample, app.fit(sample, folds, params), level, params)
    orc = None
    if oracle:
        orc = app.run(sample, true_nuisance(spec, application, sample, params), level, params)
    out = {}
    for t, e in est.items():
        out[t] = (e.psi_hat, e.se, e.ci[0], e.ci[1], np.nan if orc is None else orc[t].psi_hat)
    return out


def monte_carlo(
    spec: DgpSpec,
    application: str,
    n: int,
    reps: int,
    seed: int = 0,
    K: int = 5,
    level: float = 0.95,
    params: dict | None = None,
    oracle: bool = True,
    workers: int | None = None,
) -> dict[str, McReport]:
    """Repeat simulate -> cross-fit -> estimate ``reps`` times; one report per target.

    Rep ``r`` draws its data and folds from ``SeedSequence([seed, r])`` so the
    result does not depend on ``workers`` or scheduling. With ``oracle`` the
    estimator is re-run on the same draws with the exact nuisance to track
    ``sqrt(N) * (feasible - oracle)``.
    """
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    params = params or {}
    truth = true_psi(spec, application, params)
    if spec.margin > 0:
        check_margin(spec, application, params)
    workers = default_workers() if workers is None else max(1, int(workers))
    start = time.perf_counter()

    def job(rep):
        try:
            return run_rep(spec, application, n, rep, seed, K, level, params, oracle)
        except EnvelopeError as exc:
            exc.rep = rep
            exc.args = (f"monte carlo rep {rep}: {exc.args[0] if exc.args else exc}",)
            raise

    if workers == 1:
        results = [job(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(reps)))
    runtime = time.perf_counter() - start

    reports = {}
    for target in results[0]:
        arr = np.array([res[target] for res in results], dtype=float)  # ordered by rep
        psi, se, lo, hi, orc = arr.T
        t0 = truth[target]
        gaps = np.sqrt(n) * (psi - orc) if oracle else None
        reports[target] = McReport(
            application=application,
            target=target,
            reps=reps,
            n=n,
            K=K,
            level=level,
            seed=seed,
            truth=float(t0),
            mean_psi=float(np.mean(psi)),
            bias=float(np.mean(psi) - t0),
            mc_sd=float(np.std(psi, ddof=1)) if reps > 1 else 0.0,
            mean_se=float(np.mean(se)),
            coverage=float(np.mean((lo <= t0) & (t0 <= hi))),
            mean_abs_oracle_gap=None if gaps is None else float(np.mean(np.abs(gaps))),
            estimates=psi,
            ses=se,
            oracle_gaps=gaps,
            runtime=runtime,
        )
    return reports


def report_dict(rep: McReport) -> dict:
    """All scalar report fields, including runtime (not part of the reproducible record)."""
    d = rep.record()
    d["runtime"] = rep.runtime
    return d


__all__ = [
    "DgpSpec",
    "McReport",
    "simulate",
    "true_psi",
    "true_nuisance",
    "spec_margin",
    "check_margin",
    "monte_carlo",
    "reference_spec",
    "frechet_spec",
    "lee_spec",
    "roy_spec",
    "makarov_spec",
    "welfare_spec",
    "saddle_spec",
    "planted_saddle_matrix",
    "roy_unconditional_truth",
    "reports_to_json",
    "reports_to_csv_rows",
]
