"""Hand-set DGPs and independent reference computations shared by the tests."""

import numpy as np

from envbounds.simlab import DgpSpec


def selection_types(s1, s0):
    """Type rows (1,1), (1,0), (0,1), (0,0) with the largest always-selected share."""
    s1 = np.atleast_1d(np.asarray(s1, float))
    s0 = np.atleast_1d(np.asarray(s0, float))
    both = np.minimum(s1, s0)
    return np.column_stack([both, s1 - both, s0 - both, 1.0 - np.maximum(s1, s0)])


def treatment_spec(s1, s0, law=None, support=None, y0_law=None, x_probs=None, propensity=0.5):
    types = selection_types(s1, s0)
    C = types.shape[0]
    law = None if law is None else np.tile(np.asarray(law, float), (C, 1)) if np.ndim(law) == 1 else np.asarray(law, float)
    if y0_law is not None and np.ndim(y0_law) == 1:
        y0_law = np.tile(np.asarray(y0_law, float), (C, 1))
    return DgpSpec(
        "treatment",
        x_probs=np.full(C, 1.0 / C) if x_probs is None else x_probs,
        propensity=np.full(C, propensity),
        selection_types=types,
        outcome_support=None if support is None else np.asarray(support, float),
        y1_law=law,
        y0_law=y0_law,
    )


def arm_spec(y1_law, y0_law, support, x_probs=None):
    y1 = np.atleast_2d(np.asarray(y1_law, float))
    C = y1.shape[0]
    return treatment_spec(np.ones(C), np.ones(C), y1, support, np.atleast_2d(y0_law), x_probs)


def quantile(pmf, support, u):
    """Left-inverse quantile; levels at or below 0 give the lowest atom with mass."""
    pmf = np.asarray(pmf, float)
    if u <= 0:
        return float(support[np.flatnonzero(pmf > 0)[0]])
    cdf = np.cumsum(pmf)
    return float(support[min(np.searchsorted(cdf, u - 1e-12), len(support) - 1)])


def step_cdf(pmf, support, v, left=False):
    support = np.asarray(support, float)
    mask = support < v if left else support <= v
    return float(np.asarray(pmf)[mask].sum())


def makarov_dense(p1, p0, support, d):
    """Sup and inf over a dense real grid, including one-sided neighbours of every jump."""
    support = np.asarray(support, float)
    jumps = np.concatenate([support, support + d])
    pts = np.concatenate([jumps, jumps - 1e-7, jumps + 1e-7, np.linspace(support[0] - 2, support[-1] + d + 2, 801)])
    f = np.array([step_cdf(p1, support, t) - step_cdf(p0, support, t - d, left=True) for t in pts])
    return max(f.max(), 0.0), min(f.min(), 0.0) + 1.0
