"""Construction and preprocessing of grouped main-effect and interaction designs.

Each covariate is expanded into a polynomial basis block; interaction blocks
are row-wise Kronecker products of pairs of main blocks.  Preprocessing
normalizes, orthogonalizes (QR) and rescales every block, recording enough
information to invert the transformation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import InputError, RankDeficientError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RawDataset:
    """Response vector plus raw covariate matrix."""

    y: np.ndarray
    X: np.ndarray
    covariate_names: list[str]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise InputError("X must be a 2-D matrix")
        n, s = X.shape
        if n < 2:
            raise InputError("at least 2 observations are required")
        if y.shape != (n,):
            raise InputError("y length must match the number of rows of X")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise InputError("non-finite values in input data")
        if len(self.covariate_names) != s:
            raise InputError("one name per covariate column is required")
        if len(set(self.covariate_names)) != s:
            raise InputError("covariate names must be unique")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)


@dataclass(frozen=True)
class BlockRecord:
    """Per-block preprocessing transforms, sufficient to undo them.

    The final block equals ``normalized @ inv(r) / post_scales`` where
    ``normalized = (raw - centers) / scales`` column-wise.
    """

    centers: np.ndarray
    scales: np.ndarray
    r: np.ndarray
    post_scales: np.ndarray

    def invert(self, processed: np.ndarray) -> np.ndarray:
        """Map a processed block back to its post-normalization columns."""
        return (processed * self.post_scales) @ self.r


@dataclass
class GroupedDesign:
    """Preprocessed main-effect and interaction blocks with bookkeeping."""

    main_blocks: list[np.ndarray]
    interaction_blocks: dict[tuple[int, int], np.ndarray]
    group_sizes: list[int]
    main_records: list[BlockRecord]
    interaction_records: dict[tuple[int, int], BlockRecord]
    y_centered: np.ndarray
    y_center: float
    names: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.main_blocks[0].shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.main_blocks)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.interaction_blocks.keys())

    @cached_property
    def main_slices(self) -> list[slice]:
        out, start = [], 0
        for p in self.group_sizes:
            out.append(slice(start, start + p))
            start += p
        return out

    @cached_property
    def pair_slices(self) -> dict[tuple[int, int], slice]:
        out, start = {}, 0
        for pair in self.pairs:
            width = self.interaction_blocks[pair].shape[1]
            out[pair] = slice(start, start + width)
            start += width
        return out

    @cached_property
    def main_matrix(self) -> np.ndarray:
        return np.hstack(self.main_blocks) if self.main_blocks else np.empty((self.n, 0))

    @cached_property
    def int_matrix(self) -> np.ndarray:
        if not self.pairs:
            return np.empty((self.n, 0))
        return np.hstack([self.interaction_blocks[p] for p in self.pairs])

    # Gram caches shared by the solver; computed once per (design, rows) object.
    @cached_property
    def gram_int(self) -> np.ndarray:
        return self.int_matrix.T @ self.int_matrix

    @cached_property
    def gram_int_main(self) -> np.ndarray:
        return self.int_matrix.T @ self.main_matrix

    @cached_property
    def int_t_y(self) -> np.ndarray:
        return self.int_matrix.T @ self.y_centered

    def predict(self, beta_vec: np.ndarray, gamma_vec: np.ndarray) -> np.ndarray:
        """Fitted mean on the preprocessed scale (y still centered)."""
        out = self.main_matrix @ beta_vec
        if gamma_vec.size:
            out = out + self.int_matrix @ gamma_vec
        return out

    def subset(self, rows: np.ndarray) -> "GroupedDesign":
        """Row subset sharing preprocessing records (used for CV folds)."""
        y_sub = self.y_centered[rows]
        return GroupedDesign(
            main_blocks=[b[rows] for b in self.main_blocks],
            interaction_blocks={k: v[rows] for k, v in self.interaction_blocks.items()},
            group_sizes=list(self.group_sizes),
            main_records=self.main_records,
            interaction_records=self.interaction_records,
            y_centered=y_sub,
            y_center=self.y_center,
            names=self.names,
        )


def expand_basis(x: np.ndarray, degree: int) -> np.ndarray:
    """Polynomial basis expansion: column d is x**d for d = 1..degree."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("x must be a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite values in covariate column")
    if degree < 1:
        raise InputError("degree must be >= 1")
    return np.column_stack([x**d for d in range(1, degree + 1)])


def interaction_block(Xj: np.ndarray, Xjp: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product of two blocks.

    Column (a, b) (ordered a-major) is the elementwise product of column a of
    ``Xj`` with column b of ``Xjp``, so that
    ``interaction_block(Xj, Xjp) @ kron(bj, bjp) == (Xj @ bj) * (Xjp @ bjp)``
    row by row.
    """
    Xj = np.asarray(Xj, dtype=float)
    Xjp = np.asarray(Xjp, dtype=float)
    if Xj.shape[0] != Xjp.shape[0]:
        raise InputError("row counts of the two blocks must match")
    n, pj = Xj.shape
    pk = Xjp.shape[1]
    return (Xj[:, :, None] * Xjp[:, None, :]).reshape(n, pj * pk)


def _normalize(block: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center columns and scale to unit sample standard deviation (ddof=1)."""
    centers = block.mean(axis=0)
    centered = block - centers
    scales = centered.std(axis=0, ddof=1)
    if np.any(scales < RANK_TOL):
        raise InputError("constant column encountered during normalization")
    return centered / scales, centers, scales


def _orthogonalize(block: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """QR-orthogonalize a normalized block, then rescale to unit variance."""
    q, r = np.linalg.qr(block)
    diag = np.abs(np.diag(r))
    if diag.min() < RANK_TOL * diag.max():
        raise RankDeficientError(name, f"min |R_ii| = {diag.min():.3e}")
    # Fix signs so the factorization is deterministic.
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    r = signs[:, None] * r
    post = q.std(axis=0, ddof=1)
    return q / post, r, post


def preprocess(raw: RawDataset, degree: int) -> GroupedDesign:
    """Build the grouped design: expand, normalize, cross, orthogonalize.

    The sequence is: normalize each main block; form interaction blocks from
    the normalized mains; normalize the interaction blocks; QR-orthogonalize
    every block; center y; rescale block columns to unit sample variance.
    """
    n, s = raw.X.shape
    if n <= degree:
        raise InputError("need more observations than the basis degree")

    normalized_mains: list[np.ndarray] = []
    main_meta: list[tuple[np.ndarray, np.ndarray]] = []
    for j in range(s):
        try:
            block, centers, scales = _normalize(expand_basis(raw.X[:, j], degree))
        except InputError as exc:
            raise RankDeficientError(raw.covariate_names[j], str(exc)) from exc
        normalized_mains.append(block)
        main_meta.append((centers, scales))

    interactions: dict[tuple[int, int], np.ndarray] = {}
    int_meta: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    for j in range(s):
        for jp in range(j + 1, s):
            name = f"{raw.covariate_names[j]}:{raw.covariate_names[jp]}"
            try:
                block, centers, scales = _normalize(
                    interaction_block(normalized_mains[j], normalized_mains[jp])
                )
            except InputError as exc:
                raise RankDeficientError(name, str(exc)) from exc
            interactions[(j, jp)] = block
            int_meta[(j, jp)] = (centers, scales)

    main_blocks, main_records = [], []
    for j, block in enumerate(normalized_mains):
        q, r, post = _orthogonalize(block, raw.covariate_names[j])
        main_blocks.append(q)
        centers, scales = main_meta[j]
        main_records.append(BlockRecord(centers, scales, r, post))

    interaction_blocks, interaction_records = {}, {}
    for pair, block in interactions.items():
        name = f"{raw.covariate_names[pair[0]]}:{raw.covariate_names[pair[1]]}"
        q, r, post = _orthogonalize(block, name)
        interaction_blocks[pair] = q
        centers, scales = int_meta[pair]
        interaction_records[pair] = BlockRecord(centers, scales, r, post)

    y_center = float(raw.y.mean())
    return GroupedDesign(
        main_blocks=main_blocks,
        interaction_blocks=interaction_blocks,
        group_sizes=[b.shape[1] for b in main_blocks],
        main_records=main_records,
        interaction_records=interaction_records,
        y_centered=raw.y - y_center,
        y_center=y_center,
        names=list(raw.covariate_names),
    )
