"""Synthetic benchmark scenarios and selection error-rate metrics.

Three data-generating families are supported: linear (L), piecewise linear
(PL), and nonlinear (NL).  The first five covariates carry signal, along with
all ten pairwise interactions among them; the error rates score a method's
selected term sets against that truth.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import baselines
from .design import RawDataset, preprocess
from .exceptions import InputError
from .solver import FitOptions

logger = logging.getLogger(__name__)

FAMILIES = ("L", "PL", "NL")
TRUE_MAINS = frozenset(range(5))
TRUE_PAIRS = frozenset(itertools.combinations(range(5), 2))


@dataclass(frozen=True)
class Scenario:
    """One synthetic data-generating process."""

    family: str
    p: int
    n: int
    rho: float = 0.3
    noise_var: float = 9.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.p < 5:
            raise InputError("scenarios need at least 5 covariates")

    @property
    def name(self) -> str:
        return f"{self.family}{self.p}"

    @property
    def truth_mains(self) -> frozenset:
        return TRUE_MAINS

    @property
    def truth_pairs(self) -> frozenset:
        return TRUE_PAIRS


STANDARD_SCENARIOS = {
    f"{fam}{p}": (fam, p) for fam in FAMILIES for p in (10, 20)
}


@dataclass
class MetricsReport:
    """Mean selection error rates per method."""

    scenario: str
    n: int
    p: int
    replicates: int
    per_method: dict[str, dict] = field(default_factory=dict)
    excluded: dict[str, int] = field(default_factory=dict)

    def to_csv_rows(self) -> list[str]:
        header = "method,scenario,n,p,replicates,FNM,FPM,FNI,FPI"
        rows = [header]
        for method in sorted(self.per_method):
            m = self.per_method[method]
            vals = ",".join(
                "NA" if m[k] is None else f"{m[k]:.6f}" for k in ("fnm", "fpm", "fni", "fpi")
            )
            rows.append(f"{method},{self.scenario},{self.n},{self.p},{m['replicates']},{vals}")
        return rows


def gen_covariates(n: int, p: int, rho: float, seed: int) -> np.ndarray:
    """Draw rows from N(0, Sigma) with unit variances and common correlation rho."""
    if not (-1.0 / (p - 1) < rho < 1.0):
        raise InputError("rho must lie in (-1/(p-1), 1) for positive definiteness")
    sigma = np.full((p, p), rho)
    np.fill_diagonal(sigma, 1.0)
    chol = np.linalg.cholesky(sigma)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p)) @ chol.T


def mean_function(family: str, row: np.ndarray) -> float:
    """True regression function evaluated at one covariate row."""
    x = np.asarray(row, dtype=float)
    if x.shape[0] < 5:
        raise InputError("row must have at least 5 coordinates")
    x1, x2, x3, x4, x5 = x[:5]
    if family == "L":
        mains = x1 + x2 + x3 + x4 + x5
        ints = sum(a * b for a, b in itertools.combinations((x1, x2, x3, x4, x5), 2))
        return float(mains + ints)
    if family == "PL":
        t1 = x1 * (x1 > 0)
        t2 = x2 * (x2 < 0)
        t3 = x3 * (x3 > 0.5)
        t4 = x4 * (x4 > 0)
        t5 = x5 * (x5 < -0.5)
        mains = t1 + t2 + t3 + t4 + t5
        ints = sum(a * b for a, b in itertools.combinations((t1, t2, t3, t4, t5), 2))
        return float(mains + ints)
    if family == "NL":
        t1 = x1 * (x1 > 0)
        t2 = np.exp(x2)
        t3 = abs(x3)
        t4 = x4**2
        t5 = (x5 + 1.0) ** 2
        mains = t1 + t2 + t3 + t4 + t5
        ints = sum(a * b for a, b in itertools.combinations((t1, t2, t3, t4, t5), 2))
        return float(mains + ints)
    raise InputError(f"unknown family {family!r}")


def mean_vector(family: str, X: np.ndarray) -> np.ndarray:
    return np.array([mean_function(family, row) for row in X])


def gen_response(X: np.ndarray, family: str, noise_var: float, seed: int) -> np.ndarray:
    """y = f(X) + N(0, noise_var) noise, deterministic under seed."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(X.shape[0]) * np.sqrt(noise_var)
    return mean_vector(family, X) + noise


def compute_metrics(selected_mains: set[int], selected_pairs: set[tuple[int, int]],
                    truth_mains: frozenset, truth_pairs: frozenset, p: int) -> dict:
    """Selection error rates on a 0-100 scale; None where a denominator is empty."""
    all_pairs = set(itertools.combinations(range(p), 2))
    null_mains = set(range(p)) - truth_mains
    null_pairs = all_pairs - truth_pairs

    def rate(num, den):
        return None if not den else 100.0 * len(num) / len(den)

    return {
        "fnm": rate(truth_mains - selected_mains, truth_mains),
        "fpm": rate(selected_mains & null_mains, null_mains),
        "fni": rate(truth_pairs - selected_pairs, truth_pairs),
        "fpi": rate(selected_pairs & null_pairs, null_pairs),
    }


def linear_interaction_design(X: np.ndarray) -> tuple[np.ndarray, list]:
    """Standardized [mains, pairwise products] design with a term map."""
    n, p = X.shape
    cols = [X[:, j] for j in range(p)]
    terms: list = list(range(p))
    for a, b in itertools.combinations(range(p), 2):
        cols.append(X[:, a] * X[:, b])
        terms.append((a, b))
    Z = np.column_stack(cols)
    Z = Z - Z.mean(axis=0)
    sd = Z.std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return Z / sd, terms


def _run_replicate(scenario: Scenario, methods, rep_seed: int, grid_size: int,
                   folds: int, degree: int, fit_options: FitOptions | None,
                   rule: str | None = None, sigma: float = 1.0,
                   tau: float = 1e-6) -> dict:
    """One dataset: generate, tune, fit, select, and score every method."""
    if fit_options is None:
        fit_options = FitOptions(max_outer_iterations=40, delta=1e-3)
    seq = np.random.SeedSequence(rep_seed)
    data_seed, noise_seed, cv_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
    X = gen_covariates(scenario.n, scenario.p, scenario.rho, data_seed)
    y = gen_response(X, scenario.family, scenario.noise_var, noise_seed)
    names = [f"x{j + 1}" for j in range(scenario.p)]

    grouped = None
    results = {}
    for method in methods:
        if callable(method):
            mains, ints = method(X, y, scenario, rep_seed)
            results[getattr(method, "__name__", "custom")] = compute_metrics(
                set(mains), set(ints), scenario.truth_mains, scenario.truth_pairs, scenario.p)
            continue
        if method == "lasso":
            Z, terms = linear_interaction_design(X)
            yc = y - y.mean()
            l1_max = float(np.max(np.abs(Z.T @ yc)))
            grid = baselines.TuningGrid(
                lambda1_values=np.geomspace(l1_max, 1e-3 * l1_max, grid_size), folds=folds,
                rule=rule)
            sel = baselines.cross_validate("lasso", Z, yc, grid, cv_seed,
                                           term_columns=terms)
        else:
            if grouped is None:
                grouped = preprocess(RawDataset(y, X, names), degree)
            grid = baselines.default_grid(grouped, size=grid_size, folds=folds, rule=rule)
            sel = baselines.cross_validate(method, grouped, grouped.y_centered, grid,
                                           cv_seed, sigma=sigma, tau=tau,
                                           options=fit_options)
        results[method] = compute_metrics(
            sel.selected_mains, sel.selected_interactions,
            scenario.truth_mains, scenario.truth_pairs, scenario.p)
    return results


def run_study(scenario: Scenario, methods, replicates: int, grid_size: int = 10,
              seed: int = 0, folds: int = 10, degree: int = 3,
              fit_options: FitOptions | None = None, n_jobs: int = 1,
              rule: str | None = None, sigma: float = 1.0,
              tau: float = 1e-6) -> MetricsReport:
    """Replicate the data-generating process and average the error rates.

    ``fit_options=None`` uses study defaults (40 outer iterations, delta 1e-3);
    ``rule=None`` keeps each method's CV default ('min' for higlasso,
    'one-se' for the baselines). ``sigma`` and ``tau`` apply to the grouped
    methods only; ``tau`` is a group-norm selection threshold, so the plain
    LASSO keeps its own per-coefficient default.
    """
    if replicates < 1:
        raise InputError("replicates must be >= 1")
    rep_seeds = [int(s.generate_state(1)[0])
                 for s in np.random.SeedSequence(seed).spawn(replicates)]

    def one(rs):
        try:
            return _run_replicate(scenario, methods, rs, grid_size, folds, degree,
                                  fit_options, rule, sigma, tau)
        except Exception:
            logger.exception("replicate with seed %d failed; excluding it", rs)
            return None

    if n_jobs == 1:
        outcomes = [one(rs) for rs in rep_seeds]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(one)(rs) for rs in rep_seeds)

    report = MetricsReport(scenario=scenario.name, n=scenario.n, p=scenario.p,
                           replicates=replicates)
    method_names = [m if isinstance(m, str) else getattr(m, "__name__", "custom")
                    for m in methods]
    for name in method_names:
        vals = [o[name] for o in outcomes if o is not None]
        report.excluded[name] = replicates - len(vals)
        agg = {}
        for key in ("fnm", "fpm", "fni", "fpi"):
            seen = [v[key] for v in vals if v[key] is not None]
            agg[key] = float(np.mean(seen)) if seen else None
        agg["replicates"] = len(vals)
        report.per_method[name] = agg
    return report
