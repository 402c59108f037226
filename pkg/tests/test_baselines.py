"""LASSO / group-LASSO baselines, selection, folds, and cross-validation."""

import itertools

import numpy as np
import pytest

from higlasso.baselines import (
    SelectionResult,
    TuningGrid,
    _apply_rule,
    cross_validate,
    default_grid,
    fit_group_lasso,
    fit_lasso,
    group_lasso_kkt_violation,
    lasso_kkt_violation,
    make_folds,
    select_terms,
)
from higlasso.exceptions import InputError
from higlasso.solver import ModelState

from conftest import random_design


def lasso_objective(X, y, b, lam):
    r = y - X @ b
    return 0.5 * float(r @ r) + lam * float(np.abs(b).sum())


def lasso_sign_pattern_oracle(X, y, lam):
    """Enumerate all sign patterns; for each, solve the stationarity system
    and keep KKT-feasible candidates.  Exact for small p."""
    p = X.shape[1]
    best, best_val = None, np.inf
    for signs in itertools.product((-1, 0, 1), repeat=p):
        active = [k for k in range(p) if signs[k] != 0]
        b = np.zeros(p)
        if active:
            Xa = X[:, active]
            s = np.array([signs[k] for k in active], dtype=float)
            ba = np.linalg.solve(Xa.T @ Xa, Xa.T @ y - lam * s)
            if np.any(np.sign(ba) != s):
                continue
            b[active] = ba
        # inactive coordinates must satisfy |X_k' r| <= lam
        r = y - X @ b
        inactive = [k for k in range(p) if signs[k] == 0]
        if inactive and np.max(np.abs(X[:, inactive].T @ r)) > lam + 1e-10:
            continue
        val = lasso_objective(X, y, b, lam)
        if val < best_val:
            best, best_val = b, val
    return best


class TestLasso:
    def test_matches_sign_pattern_oracle(self):
        rng = np.random.default_rng(12)
        for trial in range(10):
            X = rng.standard_normal((30, 3))
            y = X @ np.array([2.0, 0.0, -1.0]) + 0.5 * rng.standard_normal(30)
            lam = float(rng.uniform(0.5, 10.0))
            oracle = lasso_sign_pattern_oracle(X, y, lam)
            b = fit_lasso(X, y, lam)
            np.testing.assert_allclose(b, oracle, atol=1e-6)

    def test_orthonormal_soft_threshold(self):
        """With orthonormal columns the solution is the soft threshold of X'y."""
        rng = np.random.default_rng(13)
        X, _ = np.linalg.qr(rng.standard_normal((40, 5)))
        y = rng.standard_normal(40)
        lam = 0.3
        z = X.T @ y
        expected = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)
        np.testing.assert_allclose(fit_lasso(X, y, lam), expected, atol=1e-8)

    def test_huge_lambda_gives_zero(self, rng):
        X = rng.standard_normal((20, 4))
        y = rng.standard_normal(20)
        lam = 10 * float(np.max(np.abs(X.T @ y)))
        np.testing.assert_array_equal(fit_lasso(X, y, lam), np.zeros(4))

    def test_kkt_violation_small_at_solution(self, rng):
        X = rng.standard_normal((25, 4))
        y = rng.standard_normal(25)
        b = fit_lasso(X, y, 1.0)
        assert lasso_kkt_violation(X, y, b, 1.0) < 1e-7


class TestGroupLasso:
    def orthonormal_blocks(self, rng, n=50, sizes=(2, 3, 2)):
        Q, _ = np.linalg.qr(rng.standard_normal((n, sum(sizes))))
        blocks, start = [], 0
        for p in sizes:
            blocks.append(Q[:, start:start + p])
            start += p
        return blocks

    def test_orthonormal_closed_form(self, rng):
        """With jointly orthonormal blocks each group is the group-wise soft
        threshold b_j = max(0, 1 - lam / ||z_j||) z_j with z_j = X_j' y."""
        blocks = self.orthonormal_blocks(rng)
        y = rng.standard_normal(50)
        lam = 0.4
        b = fit_group_lasso(blocks, y, lam)
        for X, bj in zip(blocks, b):
            z = X.T @ y
            expected = max(0.0, 1.0 - lam / np.linalg.norm(z)) * z
            np.testing.assert_allclose(bj, expected, atol=1e-8)

    def test_size_one_groups_reduce_to_lasso(self, rng):
        X = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        lam = 0.8
        blocks = [X[:, [k]] for k in range(4)]
        b_grp = np.concatenate(fit_group_lasso(blocks, y, lam))
        b_lasso = fit_lasso(X, y, lam)
        np.testing.assert_allclose(b_grp, b_lasso, atol=1e-6)

    def test_huge_lambda_gives_zero(self, rng):
        blocks = self.orthonormal_blocks(rng)
        y = rng.standard_normal(50)
        lam = 10 * max(np.linalg.norm(X.T @ y) for X in blocks)
        for bj in fit_group_lasso(blocks, y, lam):
            np.testing.assert_array_equal(bj, np.zeros_like(bj))

    def test_kkt_violation_small_at_solution(self, rng):
        blocks = [rng.standard_normal((40, 2)) for _ in range(3)]
        y = rng.standard_normal(40)
        b = fit_group_lasso(blocks, y, 1.5)
        assert group_lasso_kkt_violation(blocks, y, b, 1.5) < 1e-6

    def test_correlated_blocks_descend_to_stationarity(self, rng):
        """Non-orthogonal blocks still reach a KKT point."""
        base = rng.standard_normal((60, 3))
        blocks = [base + 0.3 * rng.standard_normal((60, 3)) for _ in range(3)]
        y = rng.standard_normal(60)
        b = fit_group_lasso(blocks, y, 2.0)
        assert group_lasso_kkt_violation(blocks, y, b, 2.0) < 1e-6


class TestSelectTerms:
    def test_model_state(self):
        state = ModelState(
            beta=[np.array([1.0, 0.0]), np.zeros(2), np.array([0.5, 0.2])],
            eta={(0, 1): np.zeros(4), (0, 2): np.ones(4), (1, 2): np.zeros(4)},
        )
        mains, ints = select_terms(state, tau=1e-6)
        assert mains == {0, 2}
        assert ints == {(0, 2)}  # (0, 1) has a zero parent, so gamma is zero

    def test_block_list(self):
        fitted = [np.array([0.9]), np.zeros(1), np.array([1e-9])]
        terms = [0, 1, (0, 1)]
        mains, ints = select_terms(fitted, tau=1e-6, method="group-lasso",
                                   term_columns=terms)
        assert mains == {0}
        assert ints == set()

    def test_flat_vector(self):
        coefs = np.array([0.5, 0.0, -0.3])
        terms = [0, 1, (0, 1)]
        mains, ints = select_terms(coefs, tau=1e-6, method="lasso", term_columns=terms)
        assert mains == {0}
        assert ints == {(0, 1)}

    def test_missing_term_columns(self):
        with pytest.raises(InputError):
            select_terms(np.zeros(3), tau=1e-6, method="lasso")


class TestMakeFolds:
    def test_partition(self):
        folds = make_folds(23, 5, seed=3)
        assert len(folds) == 5
        concat = np.sort(np.concatenate(folds))
        np.testing.assert_array_equal(concat, np.arange(23))
        sizes = sorted(len(f) for f in folds)
        assert sizes[-1] - sizes[0] <= 1

    def test_deterministic(self):
        a = make_folds(40, 10, seed=7)
        b = make_folds(40, 10, seed=7)
        for x, z in zip(a, b):
            np.testing.assert_array_equal(x, z)

    def test_seed_changes_assignment(self):
        a = make_folds(40, 10, seed=7)
        b = make_folds(40, 10, seed=8)
        assert any(not np.array_equal(x, z) for x, z in zip(a, b))

    def test_too_many_folds(self):
        with pytest.raises(InputError):
            make_folds(5, 6, seed=0)


class TestTuningGrid:
    def test_descending_required(self):
        with pytest.raises(InputError):
            TuningGrid(lambda1_values=np.array([1.0, 2.0]))

    def test_default_grid_shape(self):
        design = random_design(30, 3, 2, seed=21)
        grid = default_grid(design, size=6)
        assert grid.lambda1_values.size == 6
        assert np.all(np.diff(grid.lambda1_values) < 0)
        # [TRIVIAL] endpoints of the log-spaced grid
        y = design.y_centered
        l1_max = max(np.linalg.norm(b.T @ y) for b in design.main_blocks)
        assert grid.lambda1_values[0] == pytest.approx(l1_max)
        assert grid.lambda1_values[-1] == pytest.approx(1e-3 * l1_max)

    def test_invalid_rule(self):
        with pytest.raises(InputError):
            TuningGrid(lambda1_values=np.array([1.0]), rule="median")


class TestApplyRule:
    # [DERIVED] fabricated 5-point table, penalties descending:
    # means 5, 3, 2, 2.5, 4 with ses 1, 1, 0.4, 0.3, 0.2.
    # min rule -> index 2; one-SE threshold = 2 + 0.4 = 2.4, the first
    # (most penalized) index with mean <= 2.4 is index 2 as well for these
    # ses, but with a larger se at the min the earlier index 1 qualifies.
    POINTS = [(10.0, 0), (5.0, 0), (2.0, 0), (1.0, 0), (0.5, 0)]

    def test_min_rule(self):
        means = np.array([5.0, 3.0, 2.0, 2.5, 4.0])
        ses = np.array([1.0, 1.0, 0.4, 0.3, 0.2])
        assert _apply_rule(self.POINTS, means, ses, "min") == 2

    def test_one_se_rule_prefers_more_penalty(self):
        means = np.array([5.0, 3.0, 2.0, 2.5, 4.0])
        ses = np.array([1.0, 1.0, 1.5, 0.3, 0.2])
        # threshold 2 + 1.5 = 3.5 -> first qualifying index is 1
        assert _apply_rule(self.POINTS, means, ses, "one-se") == 1

    def test_one_se_equals_min_when_se_zero(self):
        means = np.array([5.0, 3.0, 2.0, 2.5, 4.0])
        ses = np.zeros(5)
        assert _apply_rule(self.POINTS, means, ses, "one-se") == 2


class TestCrossValidate:
    def lasso_problem(self, seed=5):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((60, 4))
        X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
        y = 2.0 * X[:, 0] - 1.5 * X[:, 2] + 0.3 * rng.standard_normal(60)
        return X, y - y.mean()

    def test_lasso_recovers_signal(self):
        X, y = self.lasso_problem()
        l_max = float(np.max(np.abs(X.T @ y)))
        grid = TuningGrid(lambda1_values=np.geomspace(l_max, 1e-3 * l_max, 8), folds=5)
        sel = cross_validate("lasso", X, y, grid, seed=0,
                             term_columns=[0, 1, 2, (0, 1)])
        assert 0 in sel.selected_mains
        assert 2 in sel.selected_mains
        assert 1 not in sel.selected_mains

    def test_deterministic(self):
        X, y = self.lasso_problem()
        l_max = float(np.max(np.abs(X.T @ y)))
        grid = TuningGrid(lambda1_values=np.geomspace(l_max, 1e-2 * l_max, 5), folds=5)
        a = cross_validate("lasso", X, y, grid, seed=3, term_columns=list(range(4)))
        b = cross_validate("lasso", X, y, grid, seed=3, term_columns=list(range(4)))
        assert a.selected_mains == b.selected_mains
        assert a.chosen_lambdas == b.chosen_lambdas
        assert a.cv_table == b.cv_table

    def test_higlasso_cv_small(self):
        design = random_design(40, 3, 2, seed=31)
        grid = default_grid(design, size=3, folds=4)
        sel = cross_validate("higlasso", design, design.y_centered, grid, seed=1)
        assert sel.method == "higlasso"
        assert len(sel.cv_table) == 9  # 3 x 3 grid
        assert all(np.isfinite(row["mean_cv_error"]) for row in sel.cv_table)

    def test_group_lasso_cv_small(self):
        design = random_design(40, 3, 2, seed=32)
        grid = default_grid(design, size=4, folds=4)
        sel = cross_validate("group-lasso", design, design.y_centered, grid, seed=1)
        assert len(sel.cv_table) == 4
        assert sel.chosen_lambdas[1] == 0.0

    def test_unknown_method(self):
        design = random_design(30, 2, 2, seed=33)
        grid = default_grid(design, size=2, folds=3)
        with pytest.raises(InputError):
            cross_validate("ridge", design, design.y_centered, grid, seed=0)

    def test_report_shape(self):
        sel = SelectionResult(
            method="lasso", selected_mains={0, 2}, selected_interactions={(0, 2)},
            chosen_lambdas=(1.0, 0.0), cv_table=[],
        )
        report = sel.to_report(["a", "b", "c"])
        assert report["selected_mains"] == ["a", "c"]
        assert report["selected_interactions"] == [["a", "c"]]
