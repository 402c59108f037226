"""Block-coordinate solver for the hierarchical weighted group-penalized
least-squares objective.

The interaction coefficients are reparameterized as gamma = eta * kron(beta_j,
beta_j'), so interactions are structurally zero whenever a parent group is
zero.  Each outer iteration sweeps closed-form convex-surrogate updates over
the main-effect groups, then solves one joint surrogate system for all eta
blocks; every block move is safeguarded by a backtracking (Armijo) line
search on the exact objective, which is therefore monotone non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .design import GroupedDesign
from .exceptions import InputError
from .penalty import PenaltyConfig, glqa_surrogate, penalty_value

logger = logging.getLogger(__name__)


@dataclass
class FitOptions:
    """Knobs for the iterative fit."""

    max_outer_iterations: int = 100
    delta: float = 1e-5
    armijo_c: float = 1e-4
    step_shrink: float = 0.5
    max_backtracks: int = 50
    init: str = "ridge"  # "ridge" | "zero-interactions" | "user"
    init_beta: list[np.ndarray] | None = None
    init_eta: dict[tuple[int, int], np.ndarray] | None = None

    def __post_init__(self):
        if self.max_outer_iterations < 1 or self.max_backtracks < 1:
            raise InputError("iteration counts must be positive")
        if self.delta <= 0:
            raise InputError("delta must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.step_shrink < 1:
            raise InputError("armijo_c and step_shrink must lie in (0, 1)")
        if self.init not in ("ridge", "zero-interactions", "user"):
            raise InputError(f"unknown init {self.init!r}")


@dataclass
class ModelState:
    """Grouped coefficients plus fit diagnostics."""

    beta: list[np.ndarray]
    eta: dict[tuple[int, int], np.ndarray]
    gamma: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    objective: float = np.nan
    iterations: int = 0
    converged: bool = False

    def __post_init__(self):
        if not self.gamma:
            self.gamma = {
                pair: compute_gamma(v, self.beta[pair[0]], self.beta[pair[1]])
                for pair, v in self.eta.items()
            }

    def beta_vec(self) -> np.ndarray:
        return np.concatenate(self.beta) if self.beta else np.empty(0)

    def gamma_vec(self, pairs: list[tuple[int, int]]) -> np.ndarray:
        if not pairs:
            return np.empty(0)
        return np.concatenate([self.gamma[p] for p in pairs])


def _kron_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two 1-D vectors (a-major ordering)."""
    return (a[:, None] * b[None, :]).ravel()


def compute_gamma(eta: np.ndarray, beta_j: np.ndarray, beta_jp: np.ndarray) -> np.ndarray:
    """gamma = eta * kron(beta_j, beta_j') in a-major column order."""
    eta = np.asarray(eta, dtype=float)
    kron = _kron_vec(np.asarray(beta_j, dtype=float), np.asarray(beta_jp, dtype=float))
    if eta.shape != kron.shape:
        raise InputError("eta length must equal p_j * p_j'")
    return eta * kron


def objective(state: ModelState, design: GroupedDesign, y: np.ndarray, config: PenaltyConfig) -> float:
    """Exact penalized least-squares objective at a state."""
    pairs = design.pairs
    resid = y - design.predict(state.beta_vec(), state.gamma_vec(pairs))
    val = 0.5 * float(resid @ resid)
    for b in state.beta:
        val += penalty_value(b, config.lambda1, config.sigma)
    for pair in pairs:
        val += penalty_value(state.eta[pair], config.lambda2, config.sigma)
    return val


def line_search(current: np.ndarray, candidate: np.ndarray, exact_objective_fn,
                model_decrease: float, options: FitOptions) -> tuple[np.ndarray, float, float]:
    """Backtracking Armijo search along (candidate - current).

    Accepts the largest step t in {1, s, s^2, ...} whose exact objective
    satisfies f(t) <= f(0) - armijo_c * t * model_decrease.  Returns the
    accepted point, its objective, and t (t = 0 means no move).
    """
    f0 = exact_objective_fn(current)
    direction = candidate - current
    m = max(model_decrease, 0.0)
    t = 1.0
    for _ in range(options.max_backtracks):
        trial = current + t * direction
        f_t = exact_objective_fn(trial)
        if f_t <= f0 - options.armijo_c * t * m:
            return trial, f_t, t
        t *= options.step_shrink
    return current, f0, 0.0


class _Engine:
    """Mutable fitting workspace with cached fitted-mean components."""

    def __init__(self, design: GroupedDesign, y: np.ndarray, config: PenaltyConfig,
                 options: FitOptions, beta: list[np.ndarray],
                 eta: dict[tuple[int, int], np.ndarray]):
        self.design = design
        self.y = np.asarray(y, dtype=float)
        self.config = config
        self.options = options
        self.beta = [np.array(b, dtype=float) for b in beta]
        self.eta = {k: np.array(v, dtype=float) for k, v in eta.items()}
        self.pairs = design.pairs
        for pair in self.pairs:
            if pair not in self.eta:
                self.eta[pair] = np.zeros(design.group_sizes[pair[0]] * design.group_sizes[pair[1]])

        self.frozen_beta = [np.linalg.norm(b) < config.zero_floor for b in self.beta]
        for j, frozen in enumerate(self.frozen_beta):
            if frozen:
                self.beta[j] = np.zeros_like(self.beta[j])
        self.frozen_eta = {}
        for pair in self.pairs:
            parent_zero = self.frozen_beta[pair[0]] or self.frozen_beta[pair[1]]
            if parent_zero:
                # Loss is flat in these etas; their penalized minimum is zero.
                self.eta[pair] = np.zeros_like(self.eta[pair])
            self.frozen_eta[pair] = np.linalg.norm(self.eta[pair]) < config.zero_floor
            if self.frozen_eta[pair]:
                self.eta[pair] = np.zeros_like(self.eta[pair])

        self.gamma = {pair: compute_gamma(self.eta[pair], self.beta[pair[0]], self.beta[pair[1]])
                      for pair in self.pairs}
        self.main_fit = design.main_matrix @ np.concatenate(self.beta)
        self.int_fit = np.zeros_like(self.main_fit)
        for pair in self.pairs:
            g = self.gamma[pair]
            if np.any(g):
                self.int_fit += design.interaction_blocks[pair] @ g

    # -- bookkeeping ------------------------------------------------------

    def _int_t_y(self) -> np.ndarray:
        # reuse the design's cache when fitting against its own response
        if self.y is self.design.y_centered:
            return self.design.int_t_y
        if not hasattr(self, "_int_t_y_cache"):
            self._int_t_y_cache = self.design.int_matrix.T @ self.y
        return self._int_t_y_cache

    def residual(self) -> np.ndarray:
        return self.y - self.main_fit - self.int_fit

    def penalty_total(self) -> float:
        cfg = self.config
        val = sum(penalty_value(b, cfg.lambda1, cfg.sigma) for b in self.beta)
        val += sum(penalty_value(self.eta[p], cfg.lambda2, cfg.sigma) for p in self.pairs)
        return val

    def objective_value(self) -> float:
        r = self.residual()
        return 0.5 * float(r @ r) + self.penalty_total()

    def state(self, iterations: int = 0, converged: bool = False) -> ModelState:
        return ModelState(
            beta=[b.copy() for b in self.beta],
            eta={k: v.copy() for k, v in self.eta.items()},
            gamma={k: v.copy() for k, v in self.gamma.items()},
            objective=self.objective_value(),
            iterations=iterations,
            converged=converged,
        )

    def _freeze_beta(self, j: int):
        self.main_fit -= self.design.main_blocks[j] @ self.beta[j]
        self.beta[j] = np.zeros_like(self.beta[j])
        self.frozen_beta[j] = True
        for pair in self.pairs:
            if j in pair:
                if np.any(self.gamma[pair]):
                    self.int_fit -= self.design.interaction_blocks[pair] @ self.gamma[pair]
                self.gamma[pair] = np.zeros_like(self.gamma[pair])
                self.eta[pair] = np.zeros_like(self.eta[pair])
                self.frozen_eta[pair] = True

    def _set_beta(self, j: int, new: np.ndarray):
        old = self.beta[j]
        self.main_fit += self.design.main_blocks[j] @ (new - old)
        self.beta[j] = new
        for pair in self.pairs:
            if j in pair and not self.frozen_eta[pair]:
                g_new = self.eta[pair] * _kron_vec(self.beta[pair[0]], self.beta[pair[1]])
                diff = g_new - self.gamma[pair]
                if np.any(diff):
                    self.int_fit += self.design.interaction_blocks[pair] @ diff
                self.gamma[pair] = g_new
        if np.linalg.norm(new) < self.config.zero_floor:
            self._freeze_beta(j)

    # -- partial residuals -------------------------------------------------

    def tilde_beta(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Working response and design for the group-j subproblem."""
        design = self.design
        pj = design.group_sizes[j]
        xt = design.main_blocks[j].copy()
        for pair in self.pairs:
            if j not in pair or self.frozen_eta[pair]:
                continue
            k, l = pair
            block = design.interaction_blocks[pair]
            eta = self.eta[pair]
            if k == j:
                # columns ordered (a over group j, b over group l)
                other = self.beta[l]
                if np.linalg.norm(other) == 0:
                    continue
                w = eta.reshape(pj, len(other)) * other[None, :]
                xt += np.einsum("nab,ab->na", block.reshape(-1, pj, len(other)), w)
            else:
                other = self.beta[k]
                if np.linalg.norm(other) == 0:
                    continue
                w = eta.reshape(len(other), pj) * other[:, None]
                xt += np.einsum("nab,ab->nb", block.reshape(-1, len(other), pj), w)
        y_tilde = self.y - self.main_fit - self.int_fit + xt @ self.beta[j]
        return y_tilde, xt

    # -- block updates ------------------------------------------------------

    def update_beta_block(self, j: int):
        cfg, opts = self.config, self.options
        if self.frozen_beta[j]:
            return
        surr = glqa_surrogate(self.beta[j], cfg.sigma, cfg.zero_floor)
        if surr is None:
            self._freeze_beta(j)
            return
        y_tilde, xt = self.tilde_beta(j)
        A = xt.T @ xt + cfg.lambda1 * np.diag(surr.D_abs)
        rhs = xt.T @ y_tilde + cfg.lambda1 * surr.c
        candidate = self._solve_or_gradient(A, rhs, self.beta[j])
        if candidate is None:
            return
        quad = lambda v: 0.5 * v @ A @ v - rhs @ v
        model_decrease = quad(self.beta[j]) - quad(candidate)

        current = self.beta[j]
        delta = candidate - current
        dd = float(delta @ delta)
        if dd == 0.0:
            return
        resid0 = self.residual()
        u = xt @ delta  # fitted mean is affine in beta_j, so moves are linear in t

        def exact(v):
            t = float((v - current) @ delta) / dd
            r = resid0 - t * u
            return 0.5 * float(r @ r) + penalty_value(v, cfg.lambda1, cfg.sigma)

        accepted, _, t = line_search(current, candidate, exact, model_decrease, opts)
        if t > 0:
            self._set_beta(j, accepted)

    def update_eta(self):
        cfg, opts = self.config, self.options
        design = self.design
        active = []
        for pair in self.pairs:
            if self.frozen_beta[pair[0]] or self.frozen_beta[pair[1]] or self.frozen_eta[pair]:
                continue
            surr = glqa_surrogate(self.eta[pair], cfg.sigma, cfg.zero_floor)
            if surr is None:
                self.frozen_eta[pair] = True
                if np.any(self.gamma[pair]):
                    self.int_fit -= design.interaction_blocks[pair] @ self.gamma[pair]
                self.eta[pair] = np.zeros_like(self.eta[pair])
                self.gamma[pair] = np.zeros_like(self.gamma[pair])
                continue
            active.append((pair, surr))
        if not active:
            return

        cols = np.concatenate([np.arange(design.pair_slices[p].start, design.pair_slices[p].stop)
                               for p, _ in active])
        kron = np.concatenate([_kron_vec(self.beta[p[0]], self.beta[p[1]]) for p, _ in active])
        d_abs = np.concatenate([s.D_abs for _, s in active])
        c_vec = np.concatenate([s.c for _, s in active])
        eta0 = np.concatenate([self.eta[p] for p, _ in active])

        gram = design.gram_int[np.ix_(cols, cols)]
        A = kron[:, None] * gram * kron[None, :]
        A[np.diag_indices_from(A)] += cfg.lambda2 * d_abs
        # X~^T y_tilde with y_tilde = y - sum_k X_k beta_k
        xty = (self._int_t_y() - design.gram_int_main @ np.concatenate(self.beta))[cols]
        rhs = kron * xty + cfg.lambda2 * c_vec

        candidate = self._solve_or_gradient(A, rhs, eta0)
        if candidate is None:
            return
        quad = lambda v: 0.5 * v @ A @ v - rhs @ v
        model_decrease = quad(eta0) - quad(candidate)

        delta = candidate - eta0
        u = design.int_matrix[:, cols] @ (kron * delta)
        resid0 = self.residual()
        slices, start = [], 0
        for p, _ in active:
            width = self.eta[p].size
            slices.append((p, slice(start, start + width)))
            start += width

        def exact(v):
            t = 0.0 if not delta.any() else float((v - eta0) @ delta) / float(delta @ delta)
            t_resid = resid0 - t * u
            val = 0.5 * float(t_resid @ t_resid)
            for p, sl in slices:
                val += penalty_value(v[sl], cfg.lambda2, cfg.sigma)
            return val

        accepted, _, t = line_search(eta0, candidate, exact, model_decrease, opts)
        if t > 0:
            self.int_fit += t * u
            for p, sl in slices:
                self.eta[p] = accepted[sl].copy()
                self.gamma[p] = compute_gamma(self.eta[p], self.beta[p[0]], self.beta[p[1]])
        # freeze pairs that reached zero
        for p, sl in slices:
            if np.linalg.norm(self.eta[p]) < cfg.zero_floor and not self.frozen_eta[p]:
                if np.any(self.gamma[p]):
                    self.int_fit -= design.interaction_blocks[p] @ self.gamma[p]
                self.eta[p] = np.zeros_like(self.eta[p])
                self.gamma[p] = np.zeros_like(self.gamma[p])
                self.frozen_eta[p] = True

    def _solve_or_gradient(self, A: np.ndarray, rhs: np.ndarray, current: np.ndarray) -> np.ndarray | None:
        """Solve the SPD surrogate system; fall back to one gradient step."""
        try:
            cho = scipy.linalg.cho_factor(A, check_finite=False)
            return scipy.linalg.cho_solve(cho, rhs, check_finite=False)
        except (scipy.linalg.LinAlgError, ValueError):
            grad = A @ current - rhs
            scale = np.trace(A) / len(current)
            if not np.isfinite(scale) or scale <= 0:
                return None
            return current - grad / scale

    def sweep(self):
        for j in range(self.design.n_groups):
            self.update_beta_block(j)
        self.update_eta()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def partial_residual_beta(j: int, state: ModelState, design: GroupedDesign,
                          y: np.ndarray, config: PenaltyConfig | None = None,
                          options: FitOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Working response and design matrix for the group-j subproblem."""
    eng = _Engine(design, y, config or PenaltyConfig(0.0, 0.0), options or FitOptions(),
                  state.beta, state.eta)
    return eng.tilde_beta(j)


def partial_residual_eta(state: ModelState, design: GroupedDesign,
                         y: np.ndarray) -> tuple[np.ndarray, dict[tuple[int, int], np.ndarray]]:
    """Working response and per-pair working designs for the eta subproblem."""
    y_tilde = np.asarray(y, dtype=float) - design.main_matrix @ state.beta_vec()
    xt = {}
    for pair in design.pairs:
        kron = _kron_vec(state.beta[pair[0]], state.beta[pair[1]])
        xt[pair] = design.interaction_blocks[pair] * kron[None, :]
    return y_tilde, xt


def update_beta_block(j: int, state: ModelState, design: GroupedDesign, y: np.ndarray,
                      config: PenaltyConfig, options: FitOptions | None = None) -> ModelState:
    """One closed-form-plus-line-search update of group j."""
    eng = _Engine(design, y, config, options or FitOptions(), state.beta, state.eta)
    eng.update_beta_block(j)
    return eng.state(iterations=state.iterations)


def update_eta(state: ModelState, design: GroupedDesign, y: np.ndarray,
               config: PenaltyConfig, options: FitOptions | None = None) -> ModelState:
    """One joint update of all active eta blocks."""
    eng = _Engine(design, y, config, options or FitOptions(), state.beta, state.eta)
    eng.update_eta()
    return eng.state(iterations=state.iterations)


def _ridge_init(design: GroupedDesign, y: np.ndarray, config: PenaltyConfig
                ) -> tuple[list[np.ndarray], dict[tuple[int, int], np.ndarray]]:
    """Ridge solve on the full design followed by an adaptive group threshold."""
    Z = np.hstack([design.main_matrix, design.int_matrix])
    G = Z.T @ Z
    alpha = 1e-2 * np.trace(G) / max(G.shape[0], 1)
    A = G + alpha * np.eye(G.shape[0])
    b = scipy.linalg.solve(A, Z.T @ y, assume_a="pos")

    n_main = design.main_matrix.shape[1]
    fitted = Z @ b
    # Cap each starting coordinate at +-sigma so the integrative weight of
    # the starting point is bounded below, then apply an adaptive group
    # soft-threshold so overwhelming penalties start (and stay) at zero.
    beta = [np.clip(b[sl], -config.sigma, config.sigma) for sl in design.main_slices]
    for j, sl in enumerate(design.main_slices):
        xj = design.main_blocks[j]
        z = xj.T @ (y - fitted + xj @ b[sl])
        znorm = np.linalg.norm(z)
        w = penalty_value(beta[j], config.lambda1, config.sigma) / max(
            np.linalg.norm(beta[j]), config.zero_floor)
        shrink = max(0.0, 1.0 - w / max(znorm, config.zero_floor))
        beta[j] *= shrink

    eta = {}
    for pair in design.pairs:
        sl = design.pair_slices[pair]
        g = b[n_main + sl.start:n_main + sl.stop]
        kron = _kron_vec(beta[pair[0]], beta[pair[1]])
        e = np.zeros_like(g)
        ok = np.abs(kron) > 1e-8
        # Cap the implied ratios at +-sigma so the integrative weight of the
        # starting point stays bounded away from zero.
        e[ok] = np.clip(g[ok] / kron[ok], -config.sigma, config.sigma)
        if np.any(e):
            block = design.interaction_blocks[pair]
            z = kron * (block.T @ (y - fitted + block @ g))
            w = penalty_value(e, config.lambda2, config.sigma) / max(
                np.linalg.norm(e), config.zero_floor)
            e *= max(0.0, 1.0 - w / max(np.linalg.norm(z), config.zero_floor))
        eta[pair] = e
    return beta, eta


def _initialize(design: GroupedDesign, y: np.ndarray, config: PenaltyConfig,
                options: FitOptions) -> tuple[list[np.ndarray], dict[tuple[int, int], np.ndarray]]:
    if options.init == "user":
        if options.init_beta is None or options.init_eta is None:
            raise InputError("user init requires init_beta and init_eta")
        return options.init_beta, options.init_eta
    if options.init == "zero-interactions":
        from .baselines import fit_group_lasso
        beta = fit_group_lasso(design.main_blocks, y, config.lambda1)
        eta = {pair: np.zeros(design.group_sizes[pair[0]] * design.group_sizes[pair[1]])
               for pair in design.pairs}
        return beta, eta
    return _ridge_init(design, y, config)


def fit(design: GroupedDesign, y: np.ndarray, config: PenaltyConfig,
        options: FitOptions | None = None) -> ModelState:
    """Iterate block sweeps until the objective change falls below delta."""
    options = options or FitOptions()
    beta, eta = _initialize(design, y, config, options)
    eng = _Engine(design, y, config, options, beta, eta)
    prev = eng.objective_value()
    if not np.isfinite(prev):
        logger.warning("non-finite objective at initialization; aborting fit")
        return eng.state(iterations=0, converged=False)
    for m in range(1, options.max_outer_iterations + 1):
        eng.sweep()
        cur = eng.objective_value()
        if not np.isfinite(cur):
            logger.warning("non-finite objective at iteration %d; aborting fit", m)
            return eng.state(iterations=m, converged=False)
        if abs(prev - cur) < options.delta:
            return eng.state(iterations=m, converged=True)
        prev = cur
    return eng.state(iterations=options.max_outer_iterations, converged=False)


def smooth_gradient(state: ModelState, design: GroupedDesign, y: np.ndarray
                    ) -> tuple[list[np.ndarray], dict[tuple[int, int], np.ndarray]]:
    """Analytic gradient of the squared-error loss in (beta, eta)."""
    pairs = design.pairs
    resid = np.asarray(y, dtype=float) - design.predict(state.beta_vec(), state.gamma_vec(pairs))
    grad_beta = []
    for k in range(design.n_groups):
        pk = design.group_sizes[k]
        g = -(design.main_blocks[k].T @ resid)
        for pair in pairs:
            if k not in pair:
                continue
            block = design.interaction_blocks[pair]
            eta = state.eta[pair]
            if pair[0] == k:
                other = state.beta[pair[1]]
                # (I kron beta_j')^T diag(eta) X^T r
                v = (block.T @ resid) * eta
                g -= v.reshape(pk, len(other)) @ other
            else:
                other = state.beta[pair[0]]
                v = (block.T @ resid) * eta
                g -= other @ v.reshape(len(other), pk)
        grad_beta.append(g)
    grad_eta = {}
    for pair in pairs:
        kron = _kron_vec(state.beta[pair[0]], state.beta[pair[1]])
        grad_eta[pair] = -kron * (design.interaction_blocks[pair].T @ resid)
    return grad_beta, grad_eta


def kkt_residuals(state: ModelState, design: GroupedDesign, y: np.ndarray,
                  config: PenaltyConfig) -> tuple[dict[int, float], dict[tuple[int, int], float]]:
    """Scaled stationarity residuals per group and per pair (diagnostic only)."""
    n = design.n
    grad_beta, grad_eta = smooth_gradient(state, design, y)
    group_res = {k: float(np.linalg.norm(g)) / n for k, g in enumerate(grad_beta)}
    pair_res = {p: float(np.linalg.norm(g)) / n for p, g in grad_eta.items()}
    return group_res, pair_res
