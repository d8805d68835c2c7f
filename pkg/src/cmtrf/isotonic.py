"""Margin-constrained weighted isotonic regression for rating-scale transforms.

A rating-scale transform assigns each discrete rating level a latent real
value, ordered descending from the highest level with a minimum gap
``epsilon`` between adjacent levels. Fitting one reduces to weighted
isotonic regression with a margin: substituting ``q_k = r_k + k * epsilon``
turns the margin constraints into a plain descending chain, which a
pool-adjacent-violators pass solves exactly. Pooled blocks minimize the
chosen Bregman divergence; for squared loss that is the weighted mean of
the shifted targets, for other generators the pooled value is found by
root-finding on the gradient map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .divergence import DOMAIN_TOL, SQUARED_LOSS, DivergenceSpec, SquaredLoss

MARGIN_TOL = 1e-9


@dataclass
class RatingScaleTransform:
    """Latent values per rating level, descending with margin ``epsilon``.

    ``values[0]`` belongs to the highest rating level and
    ``values[k] >= values[k+1] + epsilon`` must hold throughout.
    """

    values: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("transform values must be a nonempty 1-d vector")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        gaps = -np.diff(self.values)
        if gaps.size and gaps.min() < self.epsilon - MARGIN_TOL:
            raise ValueError(
                f"margin violation: smallest gap {gaps.min():.3g} < "
                f"epsilon {self.epsilon:.3g}"
            )

    @property
    def n_levels(self) -> int:
        return self.values.size

    def value_for_level(self, level: int) -> float:
        """Latent value of 0-based `level` (0 = lowest rating level)."""
        return float(self.values[self.n_levels - 1 - level])

    def level_order(self) -> np.ndarray:
        """Values reindexed ascending by level (lowest level first)."""
        return self.values[::-1].copy()

    @classmethod
    def base(cls, n_levels: int, epsilon: float = 0.0) -> "RatingScaleTransform":
        """The untransformed scale: level k maps to k + 1.

        Margins above 1 widen the steps so the base stays feasible.
        """
        gap = max(1.0, epsilon)
        return cls(np.arange(n_levels, 0, -1, dtype=float) * gap, epsilon)


@dataclass
class IsotonicProblem:
    """Targets and nonnegative weights per position, highest level first."""

    targets: np.ndarray
    weights: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.targets.shape != self.weights.shape or self.targets.ndim != 1:
            raise ValueError("targets and weights must be 1-d and equal length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(self.weights > 0):
            raise ValueError("at least one weight must be strictly positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass
class _Block:
    """A pooled run of adjacent positions during the PAV sweep."""

    members: list = field(default_factory=list)  # indices into the subsequence arrays
    value: float = 0.0


def _pooled_value(div, t, w, delta):
    """Minimizer of sum_i w_i * D(q - delta_i || t_i) over q."""
    if t.size == 1:
        return float(t[0] + delta[0])
    if isinstance(div, SquaredLoss):
        return float(np.sum(w * (t + delta)) / np.sum(w))
    if np.all(delta == delta[0]):
        # Uniform shift: stationarity gives grad_phi(q - d) = weighted
        # mean of grad_phi(t), solvable in closed form.
        pooled = div.grad_psi(np.sum(w * div.grad_phi(t)) / np.sum(w))
        return float(pooled + delta[0])
    target = np.sum(w * div.grad_phi(t))

    def score(q):
        return np.sum(w * div.grad_phi(np.maximum(q - delta, DOMAIN_TOL))) - target

    lo = float(np.max(delta)) + 10 * DOMAIN_TOL
    hi = float(np.max(t + delta))
    if hi <= lo:
        return lo
    if score(lo) >= 0:
        return lo
    return float(brentq(score, lo, hi, xtol=1e-13))


def fit_margin_isotonic(
    problem: IsotonicProblem, div: DivergenceSpec = SQUARED_LOSS
) -> RatingScaleTransform:
    """Minimize ``sum_k w_k * D(r_k || t_k)`` over margin-separated vectors.

    Returns the descending vector with gaps at least ``problem.epsilon``
    that best fits the targets under the given divergence. Positions with
    zero weight are excluded from the fit and filled afterwards by linear
    interpolation between their fitted neighbors (margin-stepped
    extension at the ends), which leaves the objective unchanged.
    """
    t_all = problem.targets
    w_all = problem.weights
    eps = problem.epsilon
    n = t_all.size

    active = np.flatnonzero(w_all > 0)
    t = t_all[active]
    w = w_all[active]
    div.check_second(t)

    # Shift into the plain descending problem: q_k = r_k + k * eps.
    delta = active.astype(float) * eps

    blocks: list[_Block] = []
    for idx in range(active.size):
        blocks.append(_Block([idx], float(t[idx] + delta[idx])))
        while len(blocks) >= 2 and blocks[-2].value < blocks[-1].value:
            merged = _Block(blocks[-2].members + blocks[-1].members)
            mem = np.asarray(merged.members)
            merged.value = _pooled_value(div, t[mem], w[mem], delta[mem])
            blocks[-2:] = [merged]

    q = np.empty(active.size)
    for block in blocks:
        q[block.members] = block.value
    fitted = q - delta

    values = np.empty(n)
    values[active] = fitted
    # Interior gaps: linear interpolation between fitted neighbors keeps
    # every implied margin (neighbors already differ by >= span * eps).
    for left, right in zip(active[:-1], active[1:]):
        span = right - left
        if span > 1:
            steps = np.arange(1, span)
            values[left + 1 : right] = (
                values[left] + (values[right] - values[left]) * steps / span
            )
    first, last = active[0], active[-1]
    if first > 0:
        values[:first] = values[first] + eps * np.arange(first, 0, -1)
    if last < n - 1:
        values[last + 1 :] = values[last] - eps * np.arange(1, n - last)

    return RatingScaleTransform(values, eps)
