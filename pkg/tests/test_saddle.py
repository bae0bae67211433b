import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from envbounds.core import FiniteIndexSet, Sample, make_folds
from envbounds.envelope import MIN, ScoreFamily, estimate
from envbounds.errors import NoSaddle
from envbounds.saddle import SaddleFamily, estimate_saddle, find_saddle, saddle_map
from envbounds.simlab import planted_saddle_matrix


def assert_saddle(M, cell):
    # row over t: the saddle is the smallest; column over kappa: the largest
    assert M[cell.kappa, cell.t] <= M[cell.kappa].min()
    assert M[cell.kappa, cell.t] >= M[:, cell.t].max()


def test_examples():
    cell = find_saddle([[3.0, 1.0], [2.0, 0.0]])
    assert (cell.kappa, cell.t, cell.value) == (0, 1, 1.0)
    with pytest.raises(NoSaddle):
        find_saddle([[1.0, -1.0], [-1.0, 1.0]])
    const = find_saddle(np.full((3, 4), 2.5))
    assert (const.kappa, const.t, const.value) == (0, 0, 2.5)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_planted_saddle_found(seed, nk, nt):
    M, (k, t) = planted_saddle_matrix(np.random.default_rng(seed), nk, nt, 0.05)
    cell = find_saddle(M)
    assert (cell.kappa, cell.t) == (k, t)
    assert_saddle(M, cell)


@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.integers(-5, 5).map(float)))
def test_interchange_identity(M):
    maxmin = M.min(axis=1).max()
    minmax = M.max(axis=0).min()
    if maxmin == minmax:
        cell = find_saddle(M)
        assert cell.value == maxmin == minmax
        assert_saddle(M, cell)
    else:
        with pytest.raises(NoSaddle):
            find_saddle(M)


@given(st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_shift_invariance(seed, c):
    M, _ = planted_saddle_matrix(np.random.default_rng(seed), 3, 4, 0.1)
    a, b = find_saddle(M), find_saddle(M + c)
    assert (a.kappa, a.t) == (b.kappa, b.t)
    assert b.value == pytest.approx(a.value + c, abs=1e-12)


def test_saddle_map_flags_cells():
    good, _ = planted_saddle_matrix(np.random.default_rng(0), 2, 2, 0.1)
    pennies = np.array([[1.0, -1.0], [-1.0, 1.0]])
    sm = saddle_map(np.stack([good, pennies]))
    assert sm.exists.tolist() == [True, False] and np.isnan(sm.value[1])


def obs_family(G, R):
    nk, nt = G.shape[1:]
    return SaddleFamily(
        FiniteIndexSet(tuple(range(nk))), FiniteIndexSet(tuple(range(nt))), lambda nu: G, lambda nu: R
    )


def plain_sample(n, x):
    return Sample.from_arrays(np.ones(n, int), np.ones(n, int), np.zeros(n), x)


def test_one_by_one_grid_is_mean(rng):
    n = 300
    g = rng.normal(size=(n, 1, 1))
    est = estimate_saddle(plain_sample(n, np.zeros(n, int)), obs_family(g, np.zeros_like(g)), {})
    assert est.psi_hat == pytest.approx(g.mean(), abs=1e-14)
    assert est.variance_hat == pytest.approx(g.var(), abs=1e-12)
    assert est.record()["grid"] == {"kappa": 1, "t": 1}


def test_singleton_kappa_matches_min_estimator(rng):
    n = 400
    x = rng.integers(0, 4, n)
    G = rng.normal(size=(n, 1, 5))
    R = rng.normal(size=(4, 1, 5))[x]
    sample = plain_sample(n, x)
    sad = estimate_saddle(sample, obs_family(G, R), {})
    fam = ScoreFamily(FiniteIndexSet(tuple(range(5))), lambda nu: G[:, 0], lambda nu: R[:, 0])
    env = estimate(sample, fam, {}, MIN)
    assert sad.psi_hat == env.psi_hat and sad.variance_hat == env.variance_hat


def test_no_saddle_lists_cells(rng):
    n = 20
    x = np.repeat([0, 1, 2, 3], 5)
    good, _ = planted_saddle_matrix(rng, 2, 2, 0.1)
    pennies = np.array([[1.0, -1.0], [-1.0, 1.0]])
    cells = np.stack([good, pennies, good, pennies])
    sample = Sample.from_arrays(np.ones(n, int), np.ones(n, int), np.zeros(n), x + 10)
    with pytest.raises(NoSaddle) as err:
        estimate_saddle(sample, obs_family(np.zeros((n, 2, 2)), cells[x]), {})
    assert tuple(err.value.cells) == (11, 13)


def test_saddle_uses_cross_fitted_choice(rng):
    n = 600
    x = rng.integers(0, 3, n)
    planted = np.stack([planted_saddle_matrix(rng, 2, 3, 0.5)[0] for _ in range(3)])
    G = planted[x] + 0.2 * rng.normal(size=(n, 2, 3))
    sample = plain_sample(n, x)
    from envbounds.first_stage import cell_mean_fit
    from envbounds.saddle import observed_saddle_family

    folds = make_folds(n, 5, 0)
    fit = cell_mean_fit(sample, G.reshape(n, -1), folds=folds)
    R = fit.fitted.reshape(n, 2, 3)
    est = estimate_saddle(sample, observed_saddle_family(G), {"signal_means": fit})
    for i in range(n):
        c = find_saddle(R[i])
        assert est.scores[i] == G[i, c.kappa, c.t]
