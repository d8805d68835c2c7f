"""Regularized low-rank factorization over observed entries.

Users and items get factor rows of a shared rank; a prediction is the inner
product of the two rows. Fitting alternates exact ridge solves per row for
squared loss, or damped gradient steps with backtracking for the other
divergences, so each half-sweep never increases the regularized objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergence import SQUARED_LOSS, DivergenceSpec, SquaredLoss

# Added to the ridge diagonal when a regularizer is exactly zero, so the
# normal equations stay nonsingular for rank-deficient neighborhoods.
RIDGE_FLOOR = 1e-10


@dataclass
class FactorModel:
    """User factors (N x d) and item factors (M x d)."""

    user_factors: np.ndarray
    item_factors: np.ndarray

    def __post_init__(self):
        self.user_factors = np.asarray(self.user_factors, dtype=float)
        self.item_factors = np.asarray(self.item_factors, dtype=float)
        if self.user_factors.ndim != 2 or self.item_factors.ndim != 2:
            raise ValueError("factor matrices must be 2-d")
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("user and item factors must share the rank")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if not (
            np.isfinite(self.user_factors).all()
            and np.isfinite(self.item_factors).all()
        ):
            raise ValueError("factors must be finite")

    @property
    def n_users(self) -> int:
        return self.user_factors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[0]

    @property
    def rank(self) -> int:
        return self.user_factors.shape[1]

    def copy(self) -> "FactorModel":
        return FactorModel(self.user_factors.copy(), self.item_factors.copy())


@dataclass
class RegularizationConfig:
    lambda_u: float = 0.0
    lambda_v: float = 0.0

    def __post_init__(self):
        for name in ("lambda_u", "lambda_v"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and nonnegative")


def init_model(
    n_users: int, n_items: int, rank: int, seed: int = 0, scale: float = 0.1
) -> FactorModel:
    """Seeded Gaussian initialization with small standard deviation.

    Training models keep the rank at or below min(n_users, n_items) so the
    factorization genuinely constrains the score matrix's rank.
    """
    if rank > min(n_users, n_items):
        raise ValueError("rank exceeds min(n_users, n_items)")
    rng = np.random.default_rng(seed)
    return FactorModel(
        rng.normal(0.0, scale, size=(n_users, rank)),
        rng.normal(0.0, scale, size=(n_items, rank)),
    )


def _check_index(idx: np.ndarray, bound: int, what: str) -> None:
    if idx.size and (idx.min() < 0 or idx.max() >= bound):
        raise IndexError(f"{what} index out of range [0, {bound})")


def predict_scores(model: FactorModel, pairs) -> np.ndarray:
    """Inner-product scores for an array-like of (user, item) pairs."""
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        return np.empty(0)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2)")
    users, items = pairs[:, 0], pairs[:, 1]
    _check_index(users, model.n_users, "user")
    _check_index(items, model.n_items, "item")
    return np.einsum(
        "ij,ij->i", model.user_factors[users], model.item_factors[items]
    )


def _scores(model, users, items):
    return np.einsum(
        "ij,ij->i", model.user_factors[users], model.item_factors[items]
    )


def regularized_objective(
    users: np.ndarray,
    items: np.ndarray,
    targets: np.ndarray,
    model: FactorModel,
    reg: RegularizationConfig,
    div: DivergenceSpec = SQUARED_LOSS,
) -> float:
    """Observed-entry loss plus squared-norm penalties on touched rows.

    Rows without any observation stay at their initialization and are
    excluded from the penalty.
    """
    scores = _scores(model, users, items)
    loss = div.gap(targets, scores)
    seen_u = np.unique(users)
    seen_i = np.unique(items)
    loss += 0.5 * reg.lambda_u * float(
        np.sum(model.user_factors[seen_u] ** 2)
    )
    loss += 0.5 * reg.lambda_v * float(
        np.sum(model.item_factors[seen_i] ** 2)
    )
    return float(loss)


class _RowGroups:
    """Entries grouped by one side's index for row-wise sweeps."""

    def __init__(self, keys):
        order = np.argsort(keys, kind="stable")
        self.order = order
        sorted_keys = keys[order]
        self.rows = np.unique(sorted_keys)
        bounds = np.searchsorted(sorted_keys, self.rows)
        self.starts = bounds
        self.stops = np.append(bounds[1:], keys.size)

    def __iter__(self):
        for row, start, stop in zip(self.rows, self.starts, self.stops):
            yield int(row), self.order[start:stop]


def _ridge_row(other_rows, targets, lam):
    d = other_rows.shape[1]
    gram = other_rows.T @ other_rows
    gram[np.diag_indices(d)] += lam if lam > 0 else RIDGE_FLOOR
    return np.linalg.solve(gram, other_rows.T @ targets)


def _descent_row(div, other_rows, targets, row, lam, max_backtracks=30):
    """One damped gradient step that never increases the row objective."""

    def row_obj(r):
        return div.gap(targets, other_rows @ r) + 0.5 * lam * float(r @ r)

    scores = other_rows @ row
    grad = other_rows.T @ (div.grad_psi(scores) - targets) + lam * row
    base = row_obj(row)
    step = 1.0 / (1.0 + float(np.linalg.norm(grad)))
    for _ in range(max_backtracks):
        cand = row - step * grad
        if row_obj(cand) <= base:
            return cand
        step *= 0.5
    return row


def solve_factors(
    users: np.ndarray,
    items: np.ndarray,
    targets: np.ndarray,
    init: FactorModel,
    reg: RegularizationConfig,
    div: DivergenceSpec = SQUARED_LOSS,
    sweeps: int = 1,
) -> FactorModel:
    """Alternating row updates fitting `targets` on the observed entries.

    `users`, `items`, and `targets` are parallel arrays of the observed
    (user, item, target) triplets. Each sweep updates every user row with
    the item factors fixed, then every item row; with squared loss each row
    update is the exact ridge minimizer, so the regularized objective never
    increases versus `init`.
    """
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    if not (users.shape == items.shape == targets.shape):
        raise ValueError("users, items, targets must be parallel 1-d arrays")
    _check_index(users, init.n_users, "user")
    _check_index(items, init.n_items, "item")
    if not np.isfinite(targets).all():
        raise ValueError("targets must be finite")
    div.check_first(targets)

    model = init.copy()
    U, V = model.user_factors, model.item_factors
    by_user = _RowGroups(users)
    by_item = _RowGroups(items)
    exact = isinstance(div, SquaredLoss)

    for _ in range(sweeps):
        for i, entry_ids in by_user:
            rows, t = V[items[entry_ids]], targets[entry_ids]
            if exact:
                U[i] = _ridge_row(rows, t, reg.lambda_u)
            else:
                U[i] = _descent_row(div, rows, t, U[i], reg.lambda_u)
        for j, entry_ids in by_item:
            rows, t = U[users[entry_ids]], targets[entry_ids]
            if exact:
                V[j] = _ridge_row(rows, t, reg.lambda_v)
            else:
                V[j] = _descent_row(div, rows, t, V[j], reg.lambda_v)
    return model


def save_model(model: FactorModel, path) -> None:
    """Write a text checkpoint.

    Layout: first line ``rank n_users n_items``, then one line per user row
    and one per item row, each a space-separated list of the row's factors
    at 17 significant digits (lossless for float64).
    """
    with open(path, "w") as fh:
        fh.write(f"{model.rank} {model.n_users} {model.n_items}\n")
        for row in model.user_factors:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        for row in model.item_factors:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_model(path) -> FactorModel:
    """Read a checkpoint written by :func:`save_model`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"malformed checkpoint header in {path}")
        rank, n_users, n_items = (int(v) for v in header)
        rows = [
            np.array(fh.readline().split(), dtype=float)
            for _ in range(n_users + n_items)
        ]
    data = np.vstack(rows)
    if data.shape != (n_users + n_items, rank):
        raise ValueError(f"checkpoint shape mismatch in {path}")
    return FactorModel(data[:n_users], data[n_users:])
