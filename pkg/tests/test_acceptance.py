"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
Monte Carlo runs are cached so criteria sharing a configuration reuse draws.
"""

import json
import os
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from envbounds import apps as A
from envbounds.core import DiscreteDistribution, make_folds
from envbounds.cvar import cvar_lower_direct, cvar_lower_dual, cvar_upper_direct, cvar_upper_dual, generalized_quantile
from envbounds.errors import NoSaddle
from envbounds.saddle import find_saddle
from envbounds.simlab import (
    lee_spec,
    monte_carlo,
    planted_saddle_matrix,
    reference_spec,
    rep_seeds,
    reports_to_json,
    roy_spec,
    roy_unconditional_truth,
    simulate,
    true_psi,
    welfare_spec,
)

pytestmark = pytest.mark.slow

ALL_APPS = ("frechet", "lee_binary", "lee_discrete", "roy", "makarov", "welfare_worst", "welfare_best", "saddle")
REPS = 500


def verdict(criterion, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


_timings = {}


@lru_cache(maxsize=None)
def mc(app, n, reps=REPS, oracle=True, seed=2024):
    spec, params = reference_spec(app, 0)
    start = time.perf_counter()
    out = monte_carlo(spec, app, n, reps, seed=seed, K=5, level=0.95, params=params, oracle=oracle)
    _timings[(app, n, reps, oracle, seed)] = time.perf_counter() - start
    return out


def test_criterion_1_cvar_duality():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, mismatches = 0.0, 0
    for _ in range(200):
        m = int(rng.integers(1, 11))
        support = np.sort(rng.choice(np.arange(-200, 201), m, replace=False) / 4.0)
        dist = DiscreteDistribution(support, rng.dirichlet(np.ones(m)))
        for alpha in np.round(np.arange(0.1, 1.0, 0.1), 10):
            up_d, up_u = cvar_upper_direct(dist, alpha), cvar_upper_dual(dist, alpha)
            lo_d, lo_u = cvar_lower_direct(dist, alpha), cvar_lower_dual(dist, alpha)
            worst = max(worst, abs(up_d.value - up_u.value), abs(lo_d.value - lo_u.value))
            mismatches += up_u.minimizer_beta != generalized_quantile(dist, 1 - alpha)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and mismatches == 0 and elapsed < 5
    verdict(1, ok, f"max |dual-direct| = {worst:.2e}, minimizer mismatches = {mismatches}, {elapsed:.2f}s")


def test_criterion_2_binary_reduction():
    start = time.perf_counter()
    worst, choice_diffs = 0.0, 0
    for r in range(50):
        spec = lee_spec(C=6, support=(0.0, 1.0), margin=0.0, seed=r)
        sample = simulate(spec, 1000, r + 1000)
        nu = A.fit_lee_nuisance(sample, make_folds(sample.n, 5, r))
        b, d = A.lee_bounds_binary(sample, nu), A.lee_bounds_discrete(sample, nu)
        for t in ("lower", "upper", "numerator_lower", "numerator_upper", "denominator"):
            worst = max(worst, abs(b.estimates()[t].psi_hat - d.estimates()[t].psi_hat))
        choice_diffs += int(np.sum(b.numerator_upper.choice != d.numerator_upper.choice))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    verdict(2, ok, f"max |binary-discrete| = {worst:.2e} over 50 samples ({choice_diffs} choice differences), {elapsed:.2f}s")


def _calibration(app, n, reps):
    lines, ok = [], True
    for t, r in mc(app, n, reps, oracle=False).items():
        tol = 3 * r.mc_sd / np.sqrt(r.reps)
        good = 0.92 <= r.coverage <= 0.975 and abs(r.bias) <= tol
        ok &= good
        lines.append(f"{app}.{t}: cov={r.coverage:.3f} bias={r.bias:+.2e} (tol {tol:.2e}){'' if good else ' <-'}")
    return ok, lines


def test_criterion_3_coverage():
    ok, lines = True, []
    for app in ("frechet", "lee_discrete", "roy"):
        spec, _ = reference_spec(app, 0)
        assert spec.n_cells == 10 and spec.margin >= 0.1
        good, ls = _calibration(app, 4000, REPS)
        ok &= good
        lines += ls
    elapsed = sum(v for k, v in _timings.items() if k[1] == 4000 and not k[3])
    ok &= elapsed < 300
    verdict(3, ok, f"{elapsed:.0f}s total; " + "; ".join(lines))


def test_criterion_4_oracle_property():
    start = time.perf_counter()
    ok, lines = True, []
    for app in ALL_APPS:
        small, large = mc(app, 500), mc(app, 8000)
        for t in small:
            a, b = small[t].mean_abs_oracle_gap, large[t].mean_abs_oracle_gap
            good = b <= (2.0 / 3.0) * a
            ok &= good
            lines.append(f"{app}.{t}: {a:.3g} -> {b:.3g}{'' if good else ' <-'}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    verdict(4, ok, f"mean |sqrt(N) gap| n=500 -> n=8000 ({elapsed:.0f}s): " + "; ".join(lines))


def test_criterion_5_variance_consistency():
    ok, lines = True, []
    for app in ALL_APPS:
        for t, r in mc(app, 8000).items():
            rel = abs(r.mean_se / r.mc_sd - 1.0)
            good = rel <= 0.15
            ok &= good
            lines.append(f"{app}.{t}: se/sd={r.mean_se / r.mc_sd:.3f}{'' if good else ' <-'}")
    verdict(5, ok, "; ".join(lines))


def test_criterion_6_jensen_tightening():
    exact_ok, strict, sample_ok = True, 0, True
    worst_z = -np.inf
    reps, n = 40, 4000
    for seed in range(20):
        spec = roy_spec(seed=100 + seed)
        cov, unc = true_psi(spec, "roy"), roy_unconditional_truth(spec)
        for t in cov:
            exact_ok &= cov[t] <= unc[t] + 1e-15
            strict += cov[t] < unc[t] - 1e-12
        diffs = {t: [] for t in cov}
        for rep in range(reps):
            data, fold = rep_seeds(seed, rep)
            sample = simulate(spec, n, data)
            nu = A.fit_roy_nuisance(sample, make_folds(n, 5, fold))
            a = A.roy_bounds(sample, nu).estimates()
            u = A.roy_unconditional_bounds(sample, nu).estimates()
            for t in cov:
                diffs[t].append(a[t].psi_hat - u[t].psi_hat)
        for t, dlist in diffs.items():
            dlist = np.asarray(dlist)
            mcse = dlist.std(ddof=1) / np.sqrt(reps)
            # assisted minus unconditional should not exceed zero by more than 3 MC-SE
            z = dlist.mean() / mcse if mcse > 0 else (0.0 if dlist.mean() <= 0 else np.inf)
            worst_z = max(worst_z, z)
            sample_ok &= dlist.mean() <= 3 * mcse
    ok = exact_ok and strict >= 1 and sample_ok
    verdict(6, ok, f"exact ordering {exact_ok}, strict on {strict} targets, largest (assisted-unconditional)/MC-SE = {worst_z:.2f}")


def _pennies(rng):
    # 2x2 cycle: every row minimum sits in a column whose maximum is elsewhere
    a, b, c, d = np.sort(rng.uniform(-1, 1, 4))
    M = np.array([[d, a], [b, c]]) if rng.random() < 0.5 else np.array([[a, d], [c, b]])
    return M


def test_criterion_7_saddle_suite():
    rng = np.random.default_rng(7)
    valid = 0
    for _ in range(1000):
        nk, nt = rng.integers(1, 7, 2)
        M, planted = planted_saddle_matrix(rng, int(nk), int(nt), 0.05)
        cell = find_saddle(M)
        v = M[cell.kappa, cell.t]
        valid += (cell.kappa, cell.t) == planted and v <= M[cell.kappa].min() and v >= M[:, cell.t].max()
    no_saddle = 0
    for _ in range(200):
        try:
            find_saddle(_pennies(rng))
        except NoSaddle:
            no_saddle += 1
    r = mc("saddle", 4000, oracle=False)["value"]
    cov_ok = 0.92 <= r.coverage <= 0.975
    dominance, equality = True, True
    for seed in range(20):
        for ug in (2, 5, 21):
            params = {"tau": 0.5, "ugrid": ug}
            spec = welfare_spec(C=6, seed=seed, margin=0.0)
            dominance &= true_psi(spec, "welfare_best", params)["value"] >= true_psi(spec, "welfare_worst", params)["value"] - 1e-12
            deg = welfare_spec(C=6, seed=seed, margin=0.0, degenerate_control=0.0)
            wb, ww = true_psi(deg, "welfare_best", params)["value"], true_psi(deg, "welfare_worst", params)["value"]
            dominance &= wb >= ww - 1e-12
            equality &= abs(wb - ww) <= 1e-12
    ok = valid == 1000 and no_saddle == 200 and cov_ok and dominance and equality
    verdict(
        7,
        ok,
        f"planted saddles validated {valid}/1000, NoSaddle {no_saddle}/200, saddle coverage {r.coverage:.3f}, "
        f"best>=worst {dominance}, equal under degenerate control {equality}",
    )


def _collapse(spec, app, params, targets, n=4000, reps=300):
    rep = monte_carlo(spec, app, n, reps, seed=8, params=params, oracle=False)
    out = []
    for t in targets:
        r = rep[t]
        out.append((t, r.truth, r.bias, 3 * r.mc_sd / np.sqrt(reps)))
    return out


def test_criterion_8_degenerate_collapse():
    lee = lee_spec(compliers=False, margin=0.15, seed=5)
    lee_truth = true_psi(lee, "lee_discrete")
    rows = _collapse(lee, "lee_discrete", {}, ("lower", "upper"))
    wel = welfare_spec(seed=5, degenerate_control=0.0)
    params = {"tau": 0.5, "ugrid": 2}
    rows += _collapse(wel, "welfare_worst", params, ("value",))
    rows += _collapse(wel, "welfare_best", params, ("value",))
    same_truth = abs(lee_truth["lower"] - lee_truth["upper"]) <= 1e-12 and abs(rows[2][1] - rows[3][1]) <= 1e-12
    within = all(abs(b) <= tol for _, _, b, tol in rows)
    detail = "; ".join(f"{t}: truth={tr:.4f} bias={b:+.2e} tol={tol:.2e}" for t, tr, b, tol in rows)
    verdict(8, same_truth and within, f"identified sets collapse {same_truth}; {detail}")


def test_criterion_9_determinism(tmp_path):
    spec, params = reference_spec("roy", 0)
    a = reports_to_json(monte_carlo(spec, "roy", 2000, 40, seed=9, params=params, workers=1))
    b = reports_to_json(monte_carlo(spec, "roy", 2000, 40, seed=9, params=params, workers=4))
    c = reports_to_json(monte_carlo(spec, "roy", 2000, 40, seed=9, params=params, workers=2))
    sp = tmp_path / "spec.json"
    spec.to_json(sp)
    argv = [sys.executable, "-m", "envbounds", "--cmd", "coverage", "--app", "roy", "--spec", str(sp), "--reps", "20", "--n", "1000"]
    outs = [
        subprocess.run(argv, capture_output=True, check=True, env=dict(os.environ, ENVELOPE_THREADS=str(t))).stdout
        for t in (1, 4, 1)
    ]
    json.loads(outs[0])
    ok = a == b == c and outs[0] == outs[1] == outs[2]
    verdict(9, ok, f"library reports identical across 1/2/4 workers: {a == b == c}; CLI byte-identical: {len(set(outs)) == 1}")
