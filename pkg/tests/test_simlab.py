import json
from dataclasses import replace

import numpy as np
import pytest

from envbounds import apps as A
from envbounds.envelope import resolve_nuisance
from envbounds.errors import ConfigError, MarginViolation, NoSaddle, UnsupportedApplication
from envbounds.simlab import (
    DgpSpec,
    McReport,
    check_margin,
    frechet_spec,
    lee_spec,
    monte_carlo,
    reference_spec,
    reports_to_csv_rows,
    reports_to_json,
    roy_spec,
    saddle_spec,
    simulate,
    spec_margin,
    true_nuisance,
    true_psi,
    welfare_spec,
)
from helpers import arm_spec, treatment_spec

ALL_APPS = sorted(A.APPLICATIONS)


def test_empty_draw():
    spec, _ = reference_spec("frechet")
    sample = simulate(spec, 0, 0)
    assert sample.n == 0


def test_degenerate_spec_is_deterministic():
    spec = treatment_spec([1.0, 1.0], [0.0, 0.0], law=[[0, 1], [1, 0]], support=[0, 1], propensity=1.0)
    a, b = simulate(spec, 50, 1), simulate(spec, 50, 2)
    assert np.all(a.d == 1) and np.all(a.s == 1)
    assert np.array_equal(a.y[a.x == 0], np.ones((a.x == 0).sum()))
    assert np.array_equal(b.y[b.x == 1], np.zeros((b.x == 1).sum()))


def test_cell_frequencies_binomial_band():
    spec, _ = reference_spec("frechet", 1)
    n = 100_000
    sample = simulate(spec, n, 7)
    freq = np.bincount(sample.x, minlength=spec.n_cells) / n
    p = spec.x_probs
    assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n))
    d_rate = np.array([sample.d[sample.x == c].mean() for c in range(spec.n_cells)])
    m = np.bincount(sample.x, minlength=spec.n_cells)
    q = spec.propensity
    assert np.all(np.abs(d_rate - q) <= 4 * np.sqrt(q * (1 - q) / m))


def test_monotone_draws():
    spec = lee_spec(seed=2)
    sample = simulate(spec, 5000, 0)
    # with no (0,1) type, a selected control is always selected when treated
    assert spec.selection_types[:, 2].max() == 0.0
    assert sample.s[sample.d == 0].mean() <= sample.s[sample.d == 1].mean()


def test_roy_ties_follow_treat_prob():
    spec = roy_spec(seed=1)
    sample = simulate(spec, 20_000, 0)
    s10, s01 = spec.roy_tables()
    ds = sample.d * sample.s
    for c in range(3):
        for z in range(2):
            rows = (sample.x == c) & (sample.z == z)
            p = s10[c, z]
            assert abs(ds[rows].mean() - p) <= 4 * np.sqrt(p * (1 - p) / rows.sum())


def test_true_psi_examples():
    spec = treatment_spec([0.7, 0.7], [0.4, 0.4])
    assert true_psi(spec, "frechet") == pytest.approx({"lower": 0.1, "upper": 0.4})
    with pytest.raises(UnsupportedApplication):
        true_psi(spec, "roy")
    with pytest.raises(UnsupportedApplication):
        true_psi(spec, "bogus")


def test_singleton_index_set_is_plain_mean():
    # one saddle cell and a 1x1 grid: the target is the mean of the signal
    table = np.array([[[2.0, -1.0, 5.0]]])
    spec = DgpSpec(
        "signals",
        x_probs=np.array([0.3, 0.7]),
        outcome_support=np.array([0.0, 1.0, 2.0]),
        signal_table=table,
        y_law=np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]]),
    )
    by_hand = 0.3 * (0.4 - 0.3 + 2.5) + 0.7 * (1.2 - 0.2 + 1.0)
    assert true_psi(spec, "saddle")["value"] == pytest.approx(by_hand)
    # Roy with one instrument value: the bound is E[P(S=1, D=1 | X)]
    roy = roy_spec(n_z=1, margin=0.0, seed=4)
    s10, _ = roy.roy_tables()
    assert true_psi(roy, "roy")["bound_10"] == pytest.approx(float(roy.x_probs @ s10[:, 0]))


def _signal_check(sample, family, nu, k=5.0):
    r = resolve_nuisance(nu, family.requires)
    G = family.signals(r)
    R = family.regression(r)
    for c in range(sample.n_cells):
        rows = sample.x == c
        m = G[rows].mean(axis=0)
        se = G[rows].std(axis=0) / np.sqrt(rows.sum()) + 1e-12
        assert np.all(np.abs(m - R[rows][0]) <= k * se)


def test_signals_conditionally_unbiased():
    n = 40_000
    spec = frechet_spec(C=4, seed=1)
    s = simulate(spec, n, 0)
    nu = true_nuisance(spec, "frechet", s).as_mapping()
    _signal_check(s, A.frechet_upper_family(s), nu)
    _signal_check(s, A.frechet_lower_family(s), nu)

    spec = lee_spec(C=4, seed=1)
    s = simulate(spec, n, 0)
    nu = true_nuisance(spec, "lee_discrete", s)
    for up in (True, False):
        for aug in (True, False):
            _signal_check(s, A.lee_family(s, nu.support, up, aug), nu.as_mapping())

    spec = roy_spec(C=4, seed=1)
    s = simulate(spec, n, 0)
    nu = true_nuisance(spec, "roy", s)
    for which in ("s10", "s01"):
        _signal_check(s, A.roy_family(s, nu.z_labels, which), nu.as_mapping())


def test_roy_reference_margin():
    spec = roy_spec(seed=0)
    assert spec_margin(spec, "roy") >= 0.1


def test_margin_violation():
    spec = replace(treatment_spec([0.5, 0.6], [0.45, 0.2]), margin=0.1)
    with pytest.raises(MarginViolation):
        check_margin(spec, "frechet")
    with pytest.raises(MarginViolation):
        monte_carlo(spec, "frechet", 100, 1)


@pytest.mark.parametrize("app", ALL_APPS)
def test_reference_specs_respect_margin(app):
    spec, params = reference_spec(app, 0)
    assert check_margin(spec, app, params) >= spec.margin > 0


def test_welfare_best_dominates_worst():
    for seed in range(10):
        spec = welfare_spec(C=4, seed=seed, margin=0.0)
        p = {"tau": 0.5, "ugrid": 11}
        assert true_psi(spec, "welfare_best", p)["value"] >= true_psi(spec, "welfare_worst", p)["value"] - 1e-12


def test_single_rep_report():
    spec, params = reference_spec("frechet")
    reps = monte_carlo(spec, "frechet", 300, 1, seed=3, params=params)
    r = reps["upper"]
    assert r.reps == 1 and r.estimates.shape == (1,) and r.mc_sd == 0.0
    assert r.coverage in (0.0, 1.0)


def test_seed_determinism_and_worker_independence():
    spec, params = reference_spec("lee_discrete")
    a = monte_carlo(spec, "lee_discrete", 400, 6, seed=11, params=params, workers=1)
    b = monte_carlo(spec, "lee_discrete", 400, 6, seed=11, params=params, workers=3)
    assert reports_to_json(a) == reports_to_json(b)
    for t in a:
        assert np.array_equal(a[t].estimates, b[t].estimates)
    c = monte_carlo(spec, "lee_discrete", 400, 6, seed=12, params=params)
    assert reports_to_json(a) != reports_to_json(c)


def test_report_exports():
    spec, params = reference_spec("roy")
    reps = monte_carlo(spec, "roy", 300, 2, params=params)
    rows = reports_to_csv_rows(reps)
    assert rows[0][:3] == ["application", "target", "reps"] and len(rows) == 3
    doc = json.loads(reports_to_json(reps))
    assert set(doc) == {"bound_10", "bound_01"} and "runtime" not in doc["bound_10"]
    with pytest.raises(ConfigError):
        monte_carlo(spec, "roy", 300, 0)
    with pytest.raises(ConfigError):
        McReport("a", "b", 0, 1, 2, 0.95, 0, 0, 0, 0, 0, 0, 0.5, None, np.zeros(0), np.zeros(0))


def test_rep_failure_carries_index():
    spec = saddle_spec(C=3, gap=0.0, margin=0.0, mix=0.9, seed=1)
    with pytest.raises(NoSaddle) as err:
        monte_carlo(spec, "saddle", 30, 20, params={"signal_table": spec.signal_table}, oracle=False)
    assert isinstance(err.value.rep, int) and "rep" in str(err.value)


@pytest.mark.parametrize("app", ALL_APPS)
def test_spec_json_round_trip(tmp_path, app):
    spec, params = reference_spec(app, 2)
    p = tmp_path / "spec.json"
    spec.to_json(p)
    again = DgpSpec.from_json(p)
    assert again.to_json() == spec.to_json()
    assert true_psi(again, app, params) == true_psi(spec, app, params)


def test_spec_validation():
    with pytest.raises(ConfigError):
        DgpSpec("treatment", x_probs=np.array([0.5, 0.6]), propensity=np.ones(2), selection_types=np.eye(4)[:2])
    with pytest.raises(ConfigError):
        DgpSpec.from_dict({"kind": "treatment", "x_probs": [1.0], "bogus": 1})
    with pytest.raises(ConfigError):
        DgpSpec("nope", x_probs=np.ones(1))


def test_arm_spec_helper_matches_cdfs():
    spec = arm_spec([0.2, 0.8], [0.5, 0.5], [0.0, 1.0])
    s = simulate(spec, 10, 0)
    nu = true_nuisance(spec, "makarov", s)
    assert nu.cdf1.cdf.fitted[0].tolist() == [0.2, 1.0]
