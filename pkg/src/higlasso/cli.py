"""Command-line entry points: fit, cv, and simulate."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass

import click
import numpy as np

from . import baselines, simulation, solver
from .design import RawDataset, preprocess
from .exceptions import HiglassoError, InputError
from .penalty import PenaltyConfig

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    """Fully resolved run configuration, embedded in every report."""

    command: str
    data_path: str | None = None
    response_column: str | None = None
    basis_degree: int = 3
    sigma: float = 1.0
    lambda1: float | None = None
    lambda2: float | None = None
    grid_size: int = 10
    folds: int = 10
    rule: str | None = None
    scenario: str | None = None
    replicates: int | None = None
    seed: int = 0
    output_path: str | None = None
    threads: int = 1
    log_transform: bool = False
    standardize: bool = False


def read_csv_dataset(path: str, response: str, log_transform: bool,
                     standardize: bool) -> RawDataset:
    """Strict CSV ingestion: header row, numeric columns, no missing values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InputError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise InputError(f"{path}: line {i}: {exc}") from None
            if any(math.isnan(v) for v in vals):
                raise InputError(f"{path}: line {i}: missing values are not supported")
            rows.append(vals)
    if response not in header:
        raise InputError(f"response column {response!r} not found in {path}")
    data = np.array(rows, dtype=float)
    r = header.index(response)
    y = data[:, r]
    X = np.delete(data, r, axis=1)
    names = [h for h in header if h != response]
    if log_transform:
        if np.any(X <= 0):
            raise InputError("log transform requires strictly positive covariates")
        X = np.log(X)
    if standardize:
        X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    return RawDataset(y=y, X=X, covariate_names=names)


def _write_report(path: str, payload: dict):
    payload["schema_version"] = SCHEMA_VERSION
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _selection_payload(sel: baselines.SelectionResult, names: list[str],
                       config: RunConfig) -> dict:
    return {
        "config": asdict(config),
        "result": sel.to_report(names),
    }


def _fail(msg: str):
    raise click.ClickException(msg)


@click.group()
def main():
    """Hierarchical integrative group LASSO toolkit."""


data_opts = [
    click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--response", "response_column", required=True),
    click.option("--degree", "basis_degree", default=3, show_default=True),
    click.option("--sigma", default=1.0, show_default=True),
    click.option("--seed", default=0, show_default=True),
    click.option("--out", "output_path", required=True, type=click.Path(dir_okay=False)),
    click.option("--log-transform", is_flag=True),
    click.option("--standardize", is_flag=True),
]


def add_options(opts):
    def wrap(fn):
        for opt in reversed(opts):
            fn = opt(fn)
        return fn
    return wrap


@main.command("fit")
@add_options(data_opts)
@click.option("--lambda1", required=True, type=float)
@click.option("--lambda2", required=True, type=float)
def cmd_fit(lambda1, lambda2, **kwargs):
    """Fit at fixed penalties and report selected terms plus diagnostics."""
    config = RunConfig(command="fit", lambda1=lambda1, lambda2=lambda2, **kwargs)
    try:
        raw = read_csv_dataset(config.data_path, config.response_column,
                               config.log_transform, config.standardize)
        design = preprocess(raw, config.basis_degree)
        pcfg = PenaltyConfig(lambda1=lambda1, lambda2=lambda2, sigma=config.sigma)
        state = solver.fit(design, design.y_centered, pcfg)
        if not np.isfinite(state.objective):
            _fail("fit aborted: non-finite objective")
        mains, ints = baselines.select_terms(state, pcfg.tau)
        group_res, pair_res = solver.kkt_residuals(state, design, design.y_centered, pcfg)
        payload = {
            "config": asdict(config),
            "result": baselines.SelectionResult(
                method="higlasso", selected_mains=mains, selected_interactions=ints,
                chosen_lambdas=(lambda1, lambda2), cv_table=[],
            ).to_report(design.names),
            "diagnostics": {
                "iterations": state.iterations,
                "converged": state.converged,
                "objective": state.objective,
                "kkt_group_residual_max": max(group_res.values()),
                "kkt_pair_residual_max": max(pair_res.values()) if pair_res else 0.0,
            },
        }
        _write_report(config.output_path, payload)
    except HiglassoError as exc:
        _fail(str(exc))


@main.command("cv")
@add_options(data_opts)
@click.option("--grid-size", default=10, show_default=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--rule", type=click.Choice(["min", "1se"]), default=None)
@click.option("--method", type=click.Choice(["higlasso", "group-lasso"]), default="higlasso",
              show_default=True)
def cmd_cv(grid_size, folds, rule, method, **kwargs):
    """Cross-validate over a penalty grid and refit at the chosen point."""
    config = RunConfig(command="cv", grid_size=grid_size, folds=folds, rule=rule, **kwargs)
    try:
        raw = read_csv_dataset(config.data_path, config.response_column,
                               config.log_transform, config.standardize)
        design = preprocess(raw, config.basis_degree)
        grid = baselines.default_grid(design, size=grid_size, folds=folds,
                                      rule={"1se": "one-se"}.get(rule, rule))
        sel = baselines.cross_validate(method, design, design.y_centered, grid,
                                       config.seed, sigma=config.sigma)
        _write_report(config.output_path, _selection_payload(sel, design.names, config))
    except HiglassoError as exc:
        _fail(str(exc))


@main.command("simulate")
@click.option("--scenario", required=True)
@click.option("--n", "n_override", default=1000, show_default=True)
@click.option("--replicates", required=True, type=int)
@click.option("--methods", default="higlasso,lasso,group-lasso", show_default=True)
@click.option("--grid-size", default=10, show_default=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sigma", default=1.0, show_default=True)
@click.option("--tau", default=1e-6, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--out", "output_path", required=True, type=click.Path(dir_okay=False))
def cmd_simulate(scenario, n_override, replicates, methods, grid_size, folds, seed,
                 sigma, tau, threads, output_path):
    """Run a synthetic selection study and write a metrics CSV."""
    match = re.fullmatch(r"(L|PL|NL)(\d+)", scenario)
    if not match:
        valid = ", ".join(sorted(simulation.STANDARD_SCENARIOS))
        _fail(f"unknown scenario {scenario!r}; valid names: {valid} (or FAMILY<p>)")
    if replicates < 1:
        _fail("replicates must be >= 1")
    try:
        scen = simulation.Scenario(family=match.group(1), p=int(match.group(2)),
                                   n=n_override, seed=seed)
        report = simulation.run_study(
            scen, [m.strip() for m in methods.split(",") if m.strip()],
            replicates=replicates, grid_size=grid_size, seed=seed, folds=folds,
            n_jobs=threads, sigma=sigma, tau=tau)
        with open(output_path, "w", newline="\n") as fh:
            fh.write("\n".join(report.to_csv_rows()) + "\n")
    except HiglassoError as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
