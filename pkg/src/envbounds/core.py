"""Shared domain types: observations, samples, index sets, discrete laws, folds.

A :class:`Sample` is stored column-wise. Covariate and instrument columns hold
integer *indices* into their codebooks (``x_labels``, ``z_labels``); the
outcome column holds raw reals with ``NaN`` as the sentinel for unselected
rows (``s == 0``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BadFoldCount, EmptySample, OutOfSupportCode

PROB_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Observation:
    """One data vector ``W = (D, S, S*Y, Z, X)``."""

    d: int
    s: int
    y: float = math.nan
    z: int | None = None
    x: int | float | tuple = 0


@dataclass(frozen=True)
class Schema:
    """Declared supports. ``None`` means "infer from the data"."""

    x_support: tuple[int, ...] | None = None
    z_support: tuple[int, ...] | None = None
    y_support: tuple[float, ...] | None = None


@dataclass(frozen=True)
class FiniteIndexSet:
    """Ordered, distinct labels. Order is the tie-break order."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ValueError("index set must be nonempty")
        if len(set(labels)) != len(labels):
            raise ValueError(f"index labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, i):
        return self.labels[i]

    def index(self, label) -> int:
        return self.labels.index(label)


STAR = "*"  # sentinel label whose regression function is identically zero


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite-support law with strictly increasing support."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.size == 0 or support.shape != probs.shape:
            raise ValueError("support and probs must be nonempty and the same length")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probs must be nonnegative and sum to 1 (sum={probs.sum()!r})")
        object.__setattr__(self, "support", _frozen(support))
        object.__setattr__(self, "probs", _frozen(probs))

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "DiscreteDistribution":
        support, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
        return cls(support, counts / counts.sum())

    def cdf(self) -> np.ndarray:
        F = np.cumsum(self.probs)
        F[-1] = 1.0
        return F

    def mean(self) -> float:
        return float(self.probs @ self.support)

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.support, other.support) and np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"DiscreteDistribution(support={self.support.tolist()}, probs={self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """``fold_of[i]`` is the (0-based) fold of observation ``i``."""

    fold_of: np.ndarray
    K: int
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "fold_of", _frozen(np.asarray(self.fold_of, dtype=np.intp)))

    @property
    def n(self) -> int:
        return self.fold_of.size

    @property
    def fold_ids(self) -> np.ndarray:
        """1-based fold labels ``1..K``, as used in reports."""
        return self.fold_of + 1

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K)

    def __eq__(self, other):
        if not isinstance(other, FoldAssignment):
            return NotImplemented
        return self.K == other.K and np.array_equal(self.fold_of, other.fold_of)


def make_folds(n: int, K: int, seed: int | None = 0) -> FoldAssignment:
    """Uniformly random K-fold partition with sizes ``floor(n/K)`` or ``ceil(n/K)``."""
    if K < 2 or K > n:
        raise BadFoldCount(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.intp)
    fold_of[perm] = np.arange(n) % K
    return FoldAssignment(fold_of, K, seed)


@dataclass(frozen=True, eq=False)
class Sample:
    """Validated column-wise sample.

    ``x`` is an index into ``x_labels`` for discrete covariates, or a float
    array of shape ``(n, p)`` when ``x_labels`` is ``None``.
    """

    d: np.ndarray
    s: np.ndarray
    y: np.ndarray
    x: np.ndarray
    x_labels: tuple | None
    z: np.ndarray | None = None
    z_labels: tuple | None = None
    y_support: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        for name in ("d", "s", "y", "x", "z", "y_support"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(v))

    def __len__(self) -> int:
        return self.d.size

    @property
    def n(self) -> int:
        return self.d.size

    @property
    def discrete(self) -> bool:
        return self.x_labels is not None

    @property
    def n_cells(self) -> int:
        return len(self.x_labels) if self.x_labels is not None else 0

    @property
    def usable_y(self) -> np.ndarray:
        """Mask of rows whose outcome may enter a score (``s == 1``)."""
        return self.s == 1

    @property
    def y_index(self) -> np.ndarray:
        """Index of ``y`` in ``y_support``; -1 for unselected rows."""
        idx = np.full(self.n, -1, dtype=np.intp)
        ok = self.usable_y
        idx[ok] = np.searchsorted(self.y_support, self.y[ok])
        return idx

    def codebook_sizes(self) -> dict[str, int]:
        return {
            "x": self.n_cells,
            "z": 0 if self.z_labels is None else len(self.z_labels),
            "y": int(self.y_support.size),
        }

    def subset(self, rows: np.ndarray) -> "Sample":
        return Sample(
            d=self.d[rows],
            s=self.s[rows],
            y=self.y[rows],
            x=self.x[rows],
            x_labels=self.x_labels,
            z=None if self.z is None else self.z[rows],
            z_labels=self.z_labels,
            y_support=self.y_support,
        )

    @classmethod
    def from_arrays(
        cls,
        d,
        s,
        y,
        x,
        z=None,
        schema: Schema | None = None,
        allow_empty: bool = False,
    ) -> "Sample":
        """Build a sample from raw columns (labels, not indices), validating supports."""
        schema = schema or Schema()
        d = np.asarray(d)
        n = d.size
        if n == 0 and not allow_empty:
            raise EmptySample("sample has no observations")
        s = np.asarray(s)
        y = np.asarray(y, dtype=float).copy()
        for name, col in (("d", d), ("s", s)):
            bad = np.flatnonzero((col != 0) & (col != 1))
            if bad.size:
                raise OutOfSupportCode(name, int(bad[0]), col[bad[0]].item())
        d = d.astype(np.int8)
        s = s.astype(np.int8)
        y[s == 0] = np.nan
        missing = np.flatnonzero((s == 1) & ~np.isfinite(y))
        if missing.size:
            raise OutOfSupportCode("y", int(missing[0]), y[missing[0]].item())

        x = np.asarray(x)
        if x.ndim == 2 or (x.dtype.kind == "f" and schema.x_support is None and not _integral(x)):
            x_idx, x_labels = np.asarray(x, dtype=float).reshape(n, -1), None
        else:
            x_idx, x_labels = _encode(x, schema.x_support, "x")

        z_idx = z_labels = None
        if z is not None:
            z_idx, z_labels = _encode(np.asarray(z), schema.z_support, "z")

        if schema.y_support is not None:
            y_support = np.asarray(sorted(schema.y_support), dtype=float)
            obs = y[s == 1]
            pos = np.clip(np.searchsorted(y_support, obs), 0, max(y_support.size - 1, 0))
            bad = np.flatnonzero(y_support[pos] != obs) if y_support.size else np.arange(obs.size)
            if bad.size:
                row = int(np.flatnonzero(s == 1)[bad[0]])
                raise OutOfSupportCode("y", row, y[row].item())
        else:
            y_support = np.unique(y[s == 1])
        return cls(d=d, s=s, y=y, x=x_idx, x_labels=x_labels, z=z_idx, z_labels=z_labels, y_support=y_support)

    def to_observations(self) -> list[Observation]:
        out = []
        for i in range(self.n):
            x = self.x_labels[self.x[i]] if self.discrete else tuple(self.x[i].tolist())
            z = None if self.z is None else self.z_labels[self.z[i]]
            out.append(Observation(int(self.d[i]), int(self.s[i]), float(self.y[i]), z, x))
        return out


def _integral(a: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(a)) and np.all(a == np.round(a)))


def _encode(col: np.ndarray, declared, name: str):
    if col.dtype.kind == "f":
        if not _integral(col):
            bad = int(np.flatnonzero(~np.isfinite(col) | (col != np.round(col)))[0])
            raise OutOfSupportCode(name, bad, col[bad].item())
        col = col.astype(np.int64)
    labels = tuple(sorted(int(v) for v in (declared if declared is not None else np.unique(col))))
    lab = np.asarray(labels, dtype=np.int64)
    idx = np.searchsorted(lab, col)
    pos = np.clip(idx, 0, len(labels) - 1)
    bad = np.flatnonzero(lab[pos] != col) if len(labels) else np.arange(col.size)
    if bad.size:
        raise OutOfSupportCode(name, int(bad[0]), col[bad[0]].item())
    return idx.astype(np.intp), labels


def validate_sample(observations: Iterable[Observation], schema: Schema | None = None) -> Sample:
    """Check a list of observations against declared supports and build a :class:`Sample`.

    Raises
    ------
    EmptySample
        If ``observations`` is empty.
    OutOfSupportCode
        If any code lies outside its declared support; names the field and row.
    """
    obs = list(observations)
    if not obs:
        raise EmptySample("sample has no observations")
    has_z = [o.z is not None for o in obs]
    if any(has_z) and not all(has_z):
        row = has_z.index(False)
        raise OutOfSupportCode("z", row, None)
    x = [o.x for o in obs]
    x_arr = np.asarray(x, dtype=float) if isinstance(x[0], tuple) else np.asarray(x)
    return Sample.from_arrays(
        d=[o.d for o in obs],
        s=[o.s for o in obs],
        y=[o.y for o in obs],
        x=x_arr,
        z=[o.z for o in obs] if has_z[0] else None,
        schema=schema,
    )


def _fmt_real(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def write_csv(sample: Sample, path) -> None:
    """Write ``d,s,y,z,x`` to a path or text handle (``z`` omitted when absent; ``y`` blank when ``s == 0``)."""
    if not sample.discrete:
        raise ValueError("CSV export supports discrete covariate codes only")
    if hasattr(path, "write"):
        _write_rows(sample, path)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(sample, fh)


def _write_rows(sample: Sample, fh) -> None:
    header = ["d", "s", "y"] + (["z"] if sample.z is not None else []) + ["x"]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for i in range(sample.n):
        row = [int(sample.d[i]), int(sample.s[i]), _fmt_real(sample.y[i])]
        if sample.z is not None:
            row.append(sample.z_labels[sample.z[i]])
        row.append(sample.x_labels[sample.x[i]])
        w.writerow(row)


def read_csv(path: str | Path, schema: Schema | None = None) -> Sample:
    """Read the ``d,s,y,z,x`` CSV format into a validated :class:`Sample`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptySample(f"{path} has no data rows")
    cols = set(rows[0])
    missing = {"d", "s", "y", "x"} - cols
    if missing:
        raise OutOfSupportCode(sorted(missing)[0], 0, None)

    def _int(field_, i, v):
        try:
            return int(v)
        except ValueError:
            raise OutOfSupportCode(field_, i, v) from None

    d = [_int("d", i, r["d"]) for i, r in enumerate(rows)]
    s = [_int("s", i, r["s"]) for i, r in enumerate(rows)]
    y = [float(r["y"]) if r["y"].strip() else math.nan for r in rows]
    x = [_int("x", i, r["x"]) for i, r in enumerate(rows)]
    z = [_int("z", i, r["z"]) for i, r in enumerate(rows)] if "z" in cols else None
    return Sample.from_arrays(d, s, y, np.asarray(x), None if z is None else np.asarray(z), schema=schema)
