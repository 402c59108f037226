"""Integrative group weights, penalty evaluation, and the convex quadratic
surrogate used by the block solver.

The weight of a coefficient group decays exponentially with its sup-norm, so
the penalty on a group is ``lam * exp(-||v||_inf / sigma) * ||v||_2``.  The
surrogate majorizes this penalty locally with a convex quadratic that is
tangent (in value and gradient) at the anchor point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty strengths and numerical floors."""

    lambda1: float
    lambda2: float
    sigma: float = 1.0
    zero_floor: float = 1e-10
    tau: float = 1e-6

    def __post_init__(self):
        if self.sigma <= 0:
            raise InputError("sigma must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("lambda1 and lambda2 must be nonnegative")
        if not 0 < self.zero_floor < self.tau:
            raise InputError("require 0 < zero_floor < tau")


def group_weight(v: np.ndarray, sigma: float) -> float:
    """exp(-||v||_inf / sigma); equals 1 at v = 0."""
    v = np.asarray(v, dtype=float)
    return float(np.exp(-np.max(np.abs(v), initial=0.0) / sigma))


def penalty_value(v: np.ndarray, lam: float, sigma: float) -> float:
    """Weighted group penalty lam * w(v) * ||v||_2."""
    v = np.asarray(v, dtype=float)
    return lam * group_weight(v, sigma) * float(np.linalg.norm(v))


def lqa_coefficients(v: np.ndarray, sigma: float, zero_floor: float = 1e-10) -> np.ndarray | None:
    """Per-coordinate quadratic-approximation coefficients d of the penalty.

    For coordinates not attaining the sup-norm, d_k = w / ||v||_2; for the
    attaining coordinate(s), d_k = w * (1/||v||_2 - ||v||_2 / (|v_k| sigma)).
    Ties at the maximum all receive the second branch.

    Returns None when ||v||_2 < zero_floor: the group is at zero and the
    caller must keep it there (no quadratic approximation exists).
    """
    v = np.asarray(v, dtype=float)
    l2 = float(np.linalg.norm(v))
    if l2 < zero_floor:
        return None
    absv = np.abs(v)
    linf = absv.max()
    w = np.exp(-linf / sigma)
    d = np.full(v.shape, w / l2)
    at_max = absv == linf
    d[at_max] = w * (1.0 / l2 - l2 / (absv[at_max] * sigma))
    return d


@dataclass(frozen=True)
class GLQASurrogate:
    """Convex quadratic tangent to the (unit-lambda) group penalty at anchor.

    value(v) = penalty(anchor) + 0.5 * sum_k |d_k| * ((v_k - s_k)^2 - anchor_k^2)
    with s_k = c_k / |d_k| and c_k = (|d_k| - d_k) * anchor_k.
    """

    d: np.ndarray
    D_abs: np.ndarray
    c: np.ndarray
    anchor: np.ndarray
    sigma: float

    def value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        shift = np.divide(self.c, self.D_abs, out=np.zeros_like(self.c),
                          where=self.D_abs > 0)
        quad = self.D_abs * ((v - shift) ** 2 - self.anchor**2)
        return penalty_value(self.anchor, 1.0, self.sigma) + 0.5 * float(quad.sum())

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.D_abs * np.asarray(v, dtype=float) - self.c


def glqa_surrogate(v_anchor: np.ndarray, sigma: float, zero_floor: float = 1e-10) -> GLQASurrogate | None:
    """Build the convex surrogate at an anchor, or None if the group is at zero."""
    v_anchor = np.asarray(v_anchor, dtype=float)
    d = lqa_coefficients(v_anchor, sigma, zero_floor)
    if d is None:
        return None
    d_abs = np.abs(d)
    c = (d_abs - d) * v_anchor
    return GLQASurrogate(d=d, D_abs=d_abs, c=c, anchor=v_anchor, sigma=sigma)
