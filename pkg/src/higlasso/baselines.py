"""LASSO and group-LASSO baselines, cross-validation tuning, and term selection."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .design import GroupedDesign
from .exceptions import InputError
from .penalty import PenaltyConfig
from . import solver

logger = logging.getLogger(__name__)


@dataclass
class TuningGrid:
    """Penalty grids and CV protocol."""

    lambda1_values: np.ndarray
    lambda2_values: np.ndarray = field(default_factory=lambda: np.array([]))
    folds: int = 10
    rule: str | None = None  # None = method default; "min" | "one-se"

    def __post_init__(self):
        self.lambda1_values = np.asarray(self.lambda1_values, dtype=float)
        self.lambda2_values = np.asarray(self.lambda2_values, dtype=float)
        for vals in (self.lambda1_values, self.lambda2_values):
            if vals.size > 1 and not np.all(np.diff(vals) < 0):
                raise InputError("lambda grids must be strictly descending")
        if self.folds < 2:
            raise InputError("folds must be >= 2")
        if self.rule not in (None, "min", "one-se"):
            raise InputError("rule must be 'min' or 'one-se'")


@dataclass
class SelectionResult:
    """Selected terms plus the CV table that produced them."""

    method: str
    selected_mains: set[int]
    selected_interactions: set[tuple[int, int]]
    chosen_lambdas: tuple[float, float]
    cv_table: list[dict]
    coefficients: object = None

    def to_report(self, names: list[str] | None = None) -> dict:
        def main_name(j):
            return names[j] if names else f"x{j + 1}"

        return {
            "method": self.method,
            "chosen_lambdas": list(self.chosen_lambdas),
            "selected_mains": sorted(main_name(j) for j in self.selected_mains),
            "selected_interactions": sorted(
                [main_name(a), main_name(b)] for a, b in self.selected_interactions
            ),
            "cv_table": self.cv_table,
        }


def default_grid(design: GroupedDesign, size: int = 10, folds: int = 10,
                 rule: str | None = None) -> TuningGrid:
    """Log-spaced grids from lambda_max down to 1e-3 * lambda_max."""
    y = design.y_centered
    l1_max = max(np.linalg.norm(b.T @ y) for b in design.main_blocks)
    if design.pairs:
        l2_max = max(np.linalg.norm(design.interaction_blocks[p].T @ y) for p in design.pairs)
    else:
        l2_max = l1_max
    l1 = np.geomspace(l1_max, 1e-3 * l1_max, size)
    l2 = np.geomspace(l2_max, 1e-3 * l2_max, size)
    return TuningGrid(lambda1_values=l1, lambda2_values=l2, folds=folds, rule=rule)


# ---------------------------------------------------------------------------
# LASSO (cyclic coordinate descent)
# ---------------------------------------------------------------------------

def fit_lasso(X: np.ndarray, y: np.ndarray, lam: float, max_iter: int = 10000,
              tol: float = 1e-9) -> np.ndarray:
    """Minimize 0.5*||y - Xb||^2 + lam*||b||_1 by coordinate descent."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    norms2 = np.einsum("ij,ij->j", X, X)
    b = np.zeros(p)
    resid = y.copy()
    for _ in range(max_iter):
        max_move = 0.0
        for k in range(p):
            if norms2[k] == 0:
                continue
            zk = X[:, k] @ resid + norms2[k] * b[k]
            new = np.sign(zk) * max(abs(zk) - lam, 0.0) / norms2[k]
            if new != b[k]:
                resid -= X[:, k] * (new - b[k])
                max_move = max(max_move, abs(new - b[k]))
                b[k] = new
        if max_move < tol:
            break
    return b


def lasso_kkt_violation(X: np.ndarray, y: np.ndarray, b: np.ndarray, lam: float) -> float:
    """Max deviation from the per-coordinate soft-threshold fixed point."""
    resid = y - X @ b
    norms2 = np.einsum("ij,ij->j", X, X)
    z = X.T @ resid + norms2 * b
    fixed = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0) / np.where(norms2 > 0, norms2, 1.0)
    return float(np.max(np.abs(fixed - b), initial=0.0))


# ---------------------------------------------------------------------------
# group LASSO (block coordinate descent with exact block minimization)
# ---------------------------------------------------------------------------

def _group_block_solve(eigvals: np.ndarray, eigvecs: np.ndarray, z: np.ndarray,
                       lam: float) -> np.ndarray:
    """argmin_b 0.5 b'A b - z'b + lam ||b||_2 given A = V diag(w) V'."""
    zt = eigvecs.T @ z
    if np.linalg.norm(z) <= lam:
        return np.zeros_like(z)

    def norm_gap(t):
        # ||b(t)||_2 - t where b solves (A + lam/t I) b = z
        coef = zt / (eigvals + lam / t)
        return float(np.linalg.norm(coef)) - t

    hi = np.linalg.norm(z) / max(eigvals.min(), 1e-12)
    lo = 1e-14
    t = scipy.optimize.brentq(norm_gap, lo, hi, xtol=1e-14, rtol=1e-14)
    return eigvecs @ (zt / (eigvals + lam / t))


def fit_group_lasso(blocks: list[np.ndarray], y: np.ndarray, lam: float,
                    max_iter: int = 2000, tol: float = 1e-8) -> list[np.ndarray]:
    """Minimize 0.5*||y - sum_j X_j b_j||^2 + lam * sum_j ||b_j||_2."""
    y = np.asarray(y, dtype=float)
    eigs = []
    for X in blocks:
        w, v = np.linalg.eigh(X.T @ X)
        w = np.maximum(w, 1e-12 * max(float(w.max()), 1.0))
        eigs.append((w, v))
    b = [np.zeros(X.shape[1]) for X in blocks]
    resid = y.copy()
    for _ in range(max_iter):
        max_move = 0.0
        for j, X in enumerate(blocks):
            z = X.T @ resid + (eigs[j][0] * (eigs[j][1].T @ b[j])) @ eigs[j][1].T
            new = _group_block_solve(eigs[j][0], eigs[j][1], z, lam)
            move = np.linalg.norm(new - b[j])
            if move > 0:
                resid -= X @ (new - b[j])
                b[j] = new
                max_move = max(max_move, move)
        if max_move < tol:
            break
    return b


def group_lasso_kkt_violation(blocks: list[np.ndarray], y: np.ndarray,
                              b: list[np.ndarray], lam: float) -> float:
    """Max block-wise KKT violation of the group-LASSO stationarity conditions."""
    resid = y - sum(X @ bj for X, bj in zip(blocks, b))
    worst = 0.0
    for X, bj in zip(blocks, b):
        g = X.T @ resid
        if np.linalg.norm(bj) == 0:
            worst = max(worst, max(np.linalg.norm(g) - lam, 0.0))
        else:
            worst = max(worst, float(np.linalg.norm(g - lam * bj / np.linalg.norm(bj))))
    return worst


# ---------------------------------------------------------------------------
# selection and cross-validation
# ---------------------------------------------------------------------------

def select_terms(fitted, tau: float, method: str = "higlasso",
                 term_columns: list | None = None) -> tuple[set[int], set[tuple[int, int]]]:
    """Extract selected main groups and interaction pairs from a fit.

    ``fitted`` is a ModelState (higlasso), a list of block coefficient vectors
    (group-lasso: mains first, then pairs in sorted order via term_columns),
    or a flat coefficient vector (lasso, with term_columns mapping columns).
    """
    mains: set[int] = set()
    ints: set[tuple[int, int]] = set()
    if isinstance(fitted, solver.ModelState):
        for j, bj in enumerate(fitted.beta):
            if np.linalg.norm(bj) > tau:
                mains.add(j)
        for pair, g in fitted.gamma.items():
            if np.linalg.norm(g) > tau:
                ints.add(pair)
        return mains, ints
    if term_columns is None:
        raise InputError("term_columns required for baseline selection")
    if isinstance(fitted, list):
        for term, bj in zip(term_columns, fitted):
            if np.linalg.norm(bj) > tau:
                if isinstance(term, tuple):
                    ints.add(term)
                else:
                    mains.add(term)
        return mains, ints
    coefs = np.asarray(fitted, dtype=float)
    for term, c in zip(term_columns, coefs):
        if abs(c) > tau:
            if isinstance(term, tuple):
                ints.add(term)
            else:
                mains.add(term)
    return mains, ints


def make_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled fold assignment; sizes differ by at most 1."""
    if folds > n:
        raise InputError("folds must not exceed the number of observations")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def _apply_rule(points: list[tuple], means: np.ndarray, ses: np.ndarray, rule: str) -> int:
    """Pick a grid index by the min or one-standard-error rule.

    Grid points are ordered from largest penalty to smallest, so under the
    one-SE rule the first qualifying point is the most penalized one.
    """
    i_min = int(np.argmin(means))
    if rule == "min":
        return i_min
    threshold = means[i_min] + ses[i_min]
    for i in range(len(points)):
        if means[i] <= threshold:
            return i
    return i_min


def cross_validate(method: str, design, y: np.ndarray, grid: TuningGrid, seed: int,
                   sigma: float = 1.0, tau: float = 1e-6,
                   options: solver.FitOptions | None = None,
                   term_columns: list | None = None) -> SelectionResult:
    """K-fold CV over the grid, rule-based choice, and full-data refit.

    ``design`` is a GroupedDesign for 'higlasso' and 'group-lasso', or a plain
    standardized column matrix for 'lasso' (with term_columns mapping columns
    to terms).
    """
    if grid.lambda1_values.size == 0:
        raise InputError("empty tuning grid")
    if method not in ("higlasso", "lasso", "group-lasso"):
        raise InputError(f"unknown method {method!r}")

    if method == "higlasso":
        if grid.lambda2_values.size == 0:
            raise InputError("higlasso needs a lambda2 grid")
        points = list(itertools.product(grid.lambda1_values, grid.lambda2_values))
    else:
        points = [(l1, 0.0) for l1 in grid.lambda1_values]
    rule = grid.rule or ("min" if method == "higlasso" else "one-se")

    if method == "lasso":
        X = np.asarray(design, dtype=float)
        n = X.shape[0]
    else:
        n = design.n
    folds = make_folds(n, grid.folds, seed)

    errors = np.zeros((len(points), len(folds)))
    for f, test_idx in enumerate(folds):
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        train_idx = np.nonzero(train_mask)[0]
        if method == "lasso":
            Xtr, Xte = X[train_idx], X[test_idx]
            ytr, yte = y[train_idx], y[test_idx]
            for i, (l1, _) in enumerate(points):
                b = fit_lasso(Xtr, ytr, l1)
                e = yte - Xte @ b
                errors[i, f] = float(e @ e) / len(yte)
        elif method == "group-lasso":
            dtr, dte = design.subset(train_idx), design.subset(test_idx)
            blocks_tr = dtr.main_blocks + [dtr.interaction_blocks[p] for p in dtr.pairs]
            blocks_te = dte.main_blocks + [dte.interaction_blocks[p] for p in dte.pairs]
            ytr, yte = y[train_idx], y[test_idx]
            for i, (l1, _) in enumerate(points):
                b = fit_group_lasso(blocks_tr, ytr, l1)
                pred = sum(Xb @ bj for Xb, bj in zip(blocks_te, b))
                e = yte - pred
                errors[i, f] = float(e @ e) / len(yte)
        else:
            dtr, dte = design.subset(train_idx), design.subset(test_idx)
            ytr, yte = y[train_idx], y[test_idx]
            for i, (l1, l2) in enumerate(points):
                cfg = PenaltyConfig(lambda1=l1, lambda2=l2, sigma=sigma, tau=tau)
                state = solver.fit(dtr, ytr, cfg, options)
                pred = dte.predict(state.beta_vec(), state.gamma_vec(dte.pairs))
                e = yte - pred
                errors[i, f] = float(e @ e) / len(yte)

    means = errors.mean(axis=1)
    ses = errors.std(axis=1, ddof=1) / np.sqrt(len(folds))
    chosen = _apply_rule(points, means, ses, rule)
    l1, l2 = points[chosen]

    cv_table = [
        {"lambda1": float(p[0]), "lambda2": float(p[1]),
         "mean_cv_error": float(m), "se_cv_error": float(s)}
        for p, m, s in zip(points, means, ses)
    ]

    if method == "lasso":
        coefs = fit_lasso(X, y, l1)
        if term_columns is None:
            term_columns = list(range(X.shape[1]))
        mains, ints = select_terms(coefs, tau, method, term_columns)
    elif method == "group-lasso":
        blocks = design.main_blocks + [design.interaction_blocks[p] for p in design.pairs]
        terms = list(range(design.n_groups)) + design.pairs
        coefs = fit_group_lasso(blocks, y, l1)
        mains, ints = select_terms(coefs, tau, method, terms)
    else:
        cfg = PenaltyConfig(lambda1=l1, lambda2=l2, sigma=sigma, tau=tau)
        coefs = solver.fit(design, y, cfg, options)
        mains, ints = select_terms(coefs, tau, method)

    return SelectionResult(
        method=method,
        selected_mains=mains,
        selected_interactions=ints,
        chosen_lambdas=(float(l1), float(l2)),
        cv_table=cv_table,
        coefficients=coefs,
    )
