import json
import os
import subprocess
import sys

import pytest

from envbounds import apps as A
from envbounds.cli import ESTIMATE_COLUMNS, build_parser, main
from envbounds.core import make_folds, read_csv, write_csv
from envbounds.errors import ALL_ERRORS
from envbounds.simlab import reference_spec, simulate
from helpers import treatment_spec


@pytest.fixture
def frechet_csv(tmp_path):
    spec = treatment_spec([0.8, 0.3], [0.35, 0.6])
    path = tmp_path / "two_cell.csv"
    write_csv(simulate(spec, 800, 4), path)
    return path


def test_estimate_matches_library(frechet_csv, tmp_path, capsys):
    out = tmp_path / "est.json"
    assert main(["--cmd", "estimate", "--app", "frechet", "--input", str(frechet_csv), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    sample = read_csv(frechet_csv)
    lib = A.run_application("frechet", sample, make_folds(sample.n, 5, 0))
    for t in ("lower", "upper"):
        rec = doc["targets"][t]
        assert rec["psi_hat"] == lib[t].psi_hat and rec["se"] == lib[t].se
        assert rec["ci_lo"] == lib[t].ci[0] and rec["ci_hi"] == lib[t].ci[1]
    assert doc["config"]["folds"] == 5 and doc["application"] == "frechet"


def test_estimate_csv_format(frechet_csv, capsys):
    assert main(["--cmd", "estimate", "--app", "frechet", "--input", str(frechet_csv), "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(ESTIMATE_COLUMNS) and len(lines) == 3


def test_coverage_single_rep(tmp_path):
    spec, _ = reference_spec("frechet")
    sp = tmp_path / "spec.json"
    spec.to_json(sp)
    out = tmp_path / "report.json"
    assert main(["--cmd", "coverage", "--app", "frechet", "--spec", str(sp), "--reps", "1", "--n", "300", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["upper"]["reps"] == 1 and doc["lower"]["n"] == 300


def test_simulate_writes_sample(tmp_path):
    spec, _ = reference_spec("roy")
    sp = tmp_path / "spec.json"
    spec.to_json(sp)
    out = tmp_path / "draw.csv"
    assert main(["--cmd", "simulate", "--spec", str(sp), "--n", "50", "--seed", "3", "--out", str(out)]) == 0
    sample = read_csv(out)
    assert sample.n == 50 and sample.z is not None


def test_bad_level_exits_2(frechet_csv, capsys):
    code = main(["--cmd", "estimate", "--app", "frechet", "--input", str(frechet_csv), "--level", "1.5"])
    assert code == 2
    rec = json.loads(capsys.readouterr().err)
    assert rec["error"] == "ConfigError" and rec["exit_code"] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["--cmd", "estimate", "--app", "frechet"],
        ["--cmd", "estimate", "--app", "nope", "--input", "x"],
        ["--cmd", "coverage", "--app", "frechet", "--spec", "/no/such/file"],
        ["--cmd", "bogus"],
        ["--cmd", "estimate", "--folds", "1"],
    ],
)
def test_config_errors(argv, capsys):
    assert main(argv) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_estimator_error_surfaces_with_module(tmp_path, capsys):
    spec = treatment_spec([0.5], [0.5], law=[0.5, 0.5], support=[0, 1])
    path = tmp_path / "unselected.csv"
    write_csv(simulate(spec, 200, 0), path)
    code = main(["--cmd", "estimate", "--app", "makarov", "--input", str(path)])
    rec = json.loads(capsys.readouterr().err)
    assert rec["error"] == "MissingOutcome" and code == rec["exit_code"] != 0
    assert rec["module"] == "apps"


def test_exit_codes_distinct_and_documented():
    codes = [cls.exit_code for cls in ALL_ERRORS]
    assert len(codes) == len(set(codes)) and 0 not in codes
    help_text = build_parser().format_help()
    for cls in ALL_ERRORS:
        assert cls.__name__ in help_text and f"{cls.exit_code}" in help_text
    assert "ENVELOPE_THREADS" in help_text


def _run_cli(args, threads):
    env = dict(os.environ, ENVELOPE_THREADS=str(threads))
    return subprocess.run([sys.executable, "-m", "envbounds", *args], capture_output=True, env=env, check=True).stdout


def test_output_byte_identical_across_thread_counts(tmp_path, frechet_csv):
    spec, _ = reference_spec("lee_discrete")
    sp = tmp_path / "spec.json"
    spec.to_json(sp)
    cov = ["--cmd", "coverage", "--app", "lee_discrete", "--spec", str(sp), "--reps", "8", "--n", "400"]
    outs = {_run_cli(cov, t) for t in (1, 4)} | {_run_cli(cov, 1)}
    assert len(outs) == 1
    est = ["--cmd", "estimate", "--app", "frechet", "--input", str(frechet_csv)]
    assert _run_cli(est, 1) == _run_cli(est, 3)
