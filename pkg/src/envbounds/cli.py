"""Batch command-line front end.

Three commands share one flag set: ``estimate`` reads a CSV sample and runs an
application, ``simulate`` writes a sample drawn from a DGP spec, and
``coverage`` runs a Monte Carlo study on a DGP spec.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import apps as A
from .core import make_folds, read_csv, write_csv
from .errors import ALL_ERRORS, ConfigError, EnvelopeError
from .simlab import DgpSpec, monte_carlo, reports_to_csv_rows, reports_to_json, simulate

COMMANDS = ("estimate", "simulate", "coverage")
ESTIMATE_COLUMNS = ("target", "psi_hat", "se", "ci_lo", "ci_hi", "variance_hat", "level", "n", "K", "seed")


@dataclass(frozen=True)
class RunConfig:
    cmd: str
    app: str | None = None
    input: str | None = None
    spec: str | None = None
    out: str | None = None
    format: str = "json"
    folds: int = 5
    seed: int = 0
    level: float = 0.95
    tau: float = 0.5
    ugrid: int = 21
    d: float = 0.0
    reps: int = 100
    n: int = 1000

    def validate(self) -> "RunConfig":
        if self.cmd not in COMMANDS:
            raise ConfigError(f"--cmd must be one of {COMMANDS}")
        if not (0.0 < self.level < 1.0):
            raise ConfigError(f"--level must lie in (0, 1), got {self.level}")
        if self.folds < 2:
            raise ConfigError(f"--folds must be at least 2, got {self.folds}")
        if self.format not in ("json", "csv"):
            raise ConfigError("--format must be json or csv")
        if not (0.0 < self.tau < 1.0):
            raise ConfigError(f"--tau must lie in (0, 1), got {self.tau}")
        if self.ugrid < 1:
            raise ConfigError("--ugrid must be positive")
        if self.cmd in ("estimate", "coverage"):
            if self.app is None:
                raise ConfigError(f"{self.cmd} needs --app")
            if self.app not in A.APPLICATIONS:
                raise ConfigError(f"unknown --app {self.app!r}; choose from {sorted(A.APPLICATIONS)}")
        if self.cmd == "estimate":
            _need_file(self.input, "--input")
            if self.app == "saddle":
                _need_file(self.spec, "--spec (signal table)")
        else:
            _need_file(self.spec, "--spec")
            if self.n < 0:
                raise ConfigError("--n must be non-negative")
        if self.cmd == "coverage" and self.reps < 1:
            raise ConfigError("--reps must be at least 1")
        return self

    def params(self) -> dict:
        return {"tau": self.tau, "ugrid": self.ugrid, "d": self.d}


def _need_file(path: str | None, flag: str) -> None:
    if path is None:
        raise ConfigError(f"missing {flag}")
    if not Path(path).is_file():
        raise ConfigError(f"{flag} file not found: {path}")


def _exit_code_table() -> str:
    lines = ["exit codes:", "  0   success"]
    for cls in ALL_ERRORS:
        lines.append(f"  {cls.exit_code:<3} {cls.__name__} ({cls.module})")
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="envbounds",
        description="Envelope-score estimation and simulation for aggregated intersection bounds.",
        epilog=_exit_code_table()
        + "\n\nEnvironment: ENVELOPE_THREADS sets the number of Monte Carlo worker threads.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--cmd", required=True, choices=COMMANDS)
    p.add_argument("--app", help=f"application: {', '.join(sorted(A.APPLICATIONS))}")
    p.add_argument("--input", help="CSV sample with columns d,s,y[,z],x (estimate)")
    p.add_argument("--spec", help="DGP spec JSON (simulate, coverage; signal table for the saddle app)")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--folds", type=int, default=5, help="cross-fitting folds K (default 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95, help="confidence level in (0, 1)")
    p.add_argument("--tau", type=float, default=0.5, help="quantile level for welfare applications")
    p.add_argument("--ugrid", type=int, default=21, help="number of quantile-grid points for welfare")
    p.add_argument("--d", type=float, default=0.0, help="effect point for Makarov CDF bounds")
    p.add_argument("--reps", type=int, default=100, help="Monte Carlo repetitions (coverage)")
    p.add_argument("--n", type=int, default=1000, help="sample size (simulate, coverage)")
    return p


def parse_config(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    return RunConfig(**vars(ns)).validate()


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def run_estimate(cfg: RunConfig) -> str:
    sample = read_csv(cfg.input)
    params = cfg.params()
    if cfg.app == "saddle":
        params["signal_table"] = DgpSpec.from_json(cfg.spec).signal_table
    folds = make_folds(sample.n, cfg.folds, cfg.seed)
    results = A.run_application(cfg.app, sample, folds, cfg.level, params)
    if cfg.format == "csv":
        rows = [list(ESTIMATE_COLUMNS)]
        for t, e in results.items():
            rec = e.record()
            rows.append([t] + [rec[c] for c in ESTIMATE_COLUMNS[1:]])
        return _csv_text(rows)
    doc = {
        "application": cfg.app,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out",)},
        "targets": {t: e.record() for t, e in results.items()},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def run_simulate(cfg: RunConfig) -> str:
    spec = DgpSpec.from_json(cfg.spec)
    buf = io.StringIO()
    write_csv(simulate(spec, cfg.n, cfg.seed), buf)
    return buf.getvalue()


def run_coverage(cfg: RunConfig) -> str:
    spec = DgpSpec.from_json(cfg.spec)
    params = cfg.params()
    if cfg.app == "saddle":
        params["signal_table"] = spec.signal_table
    reports = monte_carlo(spec, cfg.app, cfg.n, cfg.reps, cfg.seed, cfg.folds, cfg.level, params)
    if cfg.format == "csv":
        return _csv_text(reports_to_csv_rows(reports))
    return reports_to_json(reports) + "\n"


def error_record(exc: EnvelopeError) -> dict:
    return {
        "error": type(exc).__name__,
        "module": exc.module,
        "exit_code": exc.exit_code,
        "message": str(exc),
    }


def run(cfg: RunConfig) -> int:
    text = {"estimate": run_estimate, "simulate": run_simulate, "coverage": run_coverage}[cfg.cmd](cfg)
    if text is not None:
        _emit(text, cfg.out)
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except EnvelopeError as exc:
        sys.stderr.write(json.dumps(error_record(exc), sort_keys=True) + "\n")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
