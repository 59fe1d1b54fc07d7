"""Command-line interface: fit and check user datasets, run simulation scenarios.

Exit codes are script-friendly: 0 all good, 1 at least one term flagged by
a check, 2 malformed input, 3 runtime/fit failure.  All outputs are
deterministic for a fixed seed, except the ms_elapsed timing column.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .basis import BasisSpec
from .diagnostics import kappa_test, resmooth_check
from .fit import FitError, ModelSpec, fit
from .simulation import SCENARIO_IDS, Scenario, ScenarioResult, run_experiment

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_INPUT = 2
EXIT_RUNTIME = 3

SIM_CSV_HEADER = (
    "scenario,replicate,method,term,k_selected,mse,p_value,edf_star,refits,seed,ms_elapsed"
)
CHECK_CSV_HEADER = "term,k,edf,kappa,p_value,edf_star,edf_min,flagged,alpha,n_perm,neighbours,seed"


class InputError(ValueError):
    """Malformed user input (file, flags, or data)."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class SimCsvRow:
    """One line of the simulate CSV (one per replicate, method, and term)."""

    scenario: str
    replicate: int
    method: str
    term: str
    k_selected: int | None
    mse: float | None
    p_value: float | None
    edf_star: float | None
    refits: int | None
    seed: int
    ms_elapsed: float

    def values(self) -> list[str]:
        return [
            self.scenario,
            _fmt(self.replicate),
            self.method,
            self.term,
            _fmt(self.k_selected),
            _fmt(self.mse),
            _fmt(self.p_value),
            _fmt(self.edf_star),
            _fmt(self.refits),
            _fmt(self.seed),
            _fmt(self.ms_elapsed),
        ]


def sim_csv_rows(result: ScenarioResult) -> list[SimCsvRow]:
    """Flatten a ScenarioResult to CSV lines: one per (replicate, method, term)."""
    names = result.scenario.term_names
    out: list[SimCsvRow] = []
    for row in result.rows:
        for t, name in enumerate(names):
            out.append(
                SimCsvRow(
                    scenario=row.scenario,
                    replicate=row.replicate,
                    method=row.method,
                    term=name,
                    k_selected=row.k_selected[t] if row.k_selected is not None else None,
                    mse=row.mse,
                    p_value=row.p_values[t] if row.p_values is not None else None,
                    edf_star=row.edf_stars[t] if row.edf_stars is not None else None,
                    refits=row.refits,
                    seed=row.seed,
                    ms_elapsed=row.ms_elapsed,
                )
            )
    return out


def write_sim_csv(path: str, result: ScenarioResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SIM_CSV_HEADER.split(","))
        for row in sim_csv_rows(result):
            writer.writerow(row.values())


def read_sim_csv(path: str) -> list[SimCsvRow]:
    """Parse a simulate CSV back into typed rows (exact float round trip)."""
    rows: list[SimCsvRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SIM_CSV_HEADER.split(","):
            raise InputError("unexpected simulation CSV header")
        for rec in reader:
            rows.append(
                SimCsvRow(
                    scenario=rec["scenario"],
                    replicate=int(rec["replicate"]),
                    method=rec["method"],
                    term=rec["term"],
                    k_selected=int(rec["k_selected"]) if rec["k_selected"] else None,
                    mse=float(rec["mse"]) if rec["mse"] else None,
                    p_value=float(rec["p_value"]) if rec["p_value"] else None,
                    edf_star=float(rec["edf_star"]) if rec["edf_star"] else None,
                    refits=int(rec["refits"]) if rec["refits"] else None,
                    seed=int(rec["seed"]),
                    ms_elapsed=float(rec["ms_elapsed"]),
                )
            )
    return rows


def parse_term(text: str) -> BasisSpec:
    """Parse a --term flag: "x:10", "x1,x2:15", or "x1,x2:4:5" (marginals)."""
    parts = text.split(":")
    if len(parts) < 2:
        raise InputError(f"bad term {text!r}: expected cov[,cov2]:k[:k2]")
    covs = tuple(c.strip() for c in parts[0].split(",") if c.strip())
    try:
        dims = [int(p) for p in parts[1:]]
    except ValueError as exc:
        raise InputError(f"bad term {text!r}: dimensions must be integers") from exc
    try:
        if len(covs) == 1:
            if len(dims) != 1:
                raise InputError(f"bad term {text!r}: a univariate term takes one dimension")
            return BasisSpec(covs, dims[0])
        if len(dims) == 1:
            return BasisSpec(covs, dims[0])
        if len(dims) == 2:
            return BasisSpec(covs, dims[0] * dims[1], marginals=(dims[0], dims[1]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    raise InputError(f"bad term {text!r}: too many dimensions")


def load_table(path: str, columns: list[str]) -> dict[str, np.ndarray]:
    """Read a headered CSV and validate the columns a model needs."""
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    out: dict[str, np.ndarray] = {}
    for name in columns:
        if name not in df.columns:
            raise InputError(f"missing column {name!r} in {path}")
        col = pd.to_numeric(df[name], errors="coerce").to_numpy(dtype=float)
        if np.isnan(col).any():
            raise InputError(f"column {name!r} has missing or non-numeric values")
        out[name] = col
    return out


def _model_spec(args) -> ModelSpec:
    terms = tuple(parse_term(t) for t in args.term or [])
    if not terms:
        raise InputError("at least one --term is required")
    try:
        return ModelSpec(terms=terms, criterion=args.criterion)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _fit_from_args(args):
    spec = _model_spec(args)
    columns = [c for t in spec.terms for c in t.covariates] + [args.response]
    data = load_table(args.input, columns)
    return spec, data, fit(spec, data, response=args.response)


def cmd_fit(args) -> int:
    spec, _, model = _fit_from_args(args)
    report = {
        "n": model.n,
        "response": args.response,
        "criterion": model.criterion,
        "criterion_value": model.criterion_value,
        "phi_hat": model.phi_hat,
        "edf_total": model.edf_total,
        "terms": [":".join(t.covariates) for t in spec.terms],
        "k_per_term": [t.realized_k for t in spec.terms],
        "lambda_per_term": [float(v) for v in model.lambdas],
        "edf_per_term": [float(v) for v in model.edf_per_term],
        "intercept": float(model.beta[0]),
        "coefficients": [float(v) for v in model.beta],
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    methods = [m.strip() for m in args.method.split(",")]
    for m in methods:
        if m not in ("kappa", "resmooth"):
            raise InputError(f"check supports methods kappa and resmooth, not {m!r}")
    spec, _, model = _fit_from_args(args)
    lines = []
    any_flagged = False
    for j, term in enumerate(spec.terms):
        kres = kappa_test(model, j, n_perm=args.perms, seed=args.seed, neighbours=args.neighbours) if "kappa" in methods else None
        rres = resmooth_check(model, j) if "resmooth" in methods else None
        flagged = bool(kres and kres.p_value < args.alpha) or bool(rres and rres.flagged)
        any_flagged = any_flagged or flagged
        lines.append(
            [
                ":".join(term.covariates),
                _fmt(term.realized_k),
                _fmt(float(model.edf_per_term[j])),
                _fmt(kres.kappa if kres else None),
                _fmt(kres.p_value if kres else None),
                _fmt(rres.edf_star if rres else None),
                _fmt(rres.edf_min if rres else None),
                _fmt(flagged),
                _fmt(args.alpha),
                _fmt(args.perms if kres else None),
                _fmt(args.neighbours if kres else None),
                _fmt(args.seed),
            ]
        )
    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(CHECK_CSV_HEADER.split(","))
        writer.writerows(lines)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(sys.stdout)
    return EXIT_FLAGGED if any_flagged else EXIT_OK


def cmd_simulate(args) -> int:
    if args.scenario not in SCENARIO_IDS:
        raise InputError(f"unknown scenario {args.scenario!r} (choose from {', '.join(SCENARIO_IDS)})")
    methods = tuple(m.strip() for m in args.method.split(","))
    try:
        scenario = Scenario(
            id=args.scenario,
            n=args.n or 0,
            sigma=args.sigma,
            replicates=args.replicates,
            methods=methods,
            base_seed=args.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = run_experiment(scenario)
    if args.output:
        write_sim_csv(args.output, result)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(SIM_CSV_HEADER.split(","))
        for row in sim_csv_rows(result):
            writer.writerow(row.values())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothdim",
        description="Penalized regression spline additive models with basis dimension checking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_args(p):
        p.add_argument("--input", required=True, help="input CSV with a header row")
        p.add_argument("--output", default=None, help="output path (stdout when omitted)")
        p.add_argument("--response", default="y", help="response column name")
        p.add_argument("--term", action="append", help="smooth term as cov[,cov2]:k[:k2]; repeatable")
        p.add_argument("--criterion", choices=["gcv", "reml"], default="gcv")
        p.add_argument("--seed", type=int, default=0)

    p_fit = sub.add_parser("fit", help="fit a model and write a JSON report")
    add_model_args(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_check = sub.add_parser("check", help="fit, check basis dimensions, write a per-term CSV")
    add_model_args(p_check)
    p_check.add_argument("--method", default="kappa", help="comma list of kappa,resmooth")
    p_check.add_argument("--alpha", type=float, default=0.05)
    p_check.add_argument("--perms", type=int, default=199, help="permutations for the kappa test")
    p_check.add_argument("--neighbours", type=int, default=3)
    p_check.set_defaults(func=cmd_check)

    p_sim = sub.add_parser("simulate", help="run a simulation scenario and write results CSV")
    p_sim.add_argument("--scenario", required=True, help=f"one of {', '.join(SCENARIO_IDS)}")
    p_sim.add_argument("--output", default=None, help="results CSV path (stdout when omitted)")
    p_sim.add_argument("--replicates", type=int, default=50)
    p_sim.add_argument("--method", default=",".join(("kappa", "resmooth", "gcv-grid", "reml-grid")))
    p_sim.add_argument("--n", type=int, default=None, help="sample size (scenario default when omitted)")
    p_sim.add_argument("--sigma", type=float, default=0.2)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
