"""Alternating minimization drivers for scale-transform factorization.

Three training modes share one loop: a transform step projects per-level
prediction averages onto the margin-separated descending set (globally, per
user, or per cluster of users), then a factorization step refits the factor
rows against the transformed targets. The clustered mode adds a relocation
step that reassigns each user to the cluster transform with the least
divergence before the other two steps run. Every step is an exact or
guarded descent step, so the regularized objective never increases.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import SparseRatingDataset
from .divergence import SQUARED_LOSS, DivergenceSpec
from .errors import DataError
from .factorization import (
    FactorModel,
    RegularizationConfig,
    init_model,
    regularized_objective,
    solve_factors,
)
from .isotonic import IsotonicProblem, RatingScaleTransform, fit_margin_isotonic

MODES = ("1cmtrf", "ncmtrf", "kcmtrf", "mf")


@dataclass
class TrainConfig:
    mode: str = "kcmtrf"
    n_clusters: int = 1
    rank: int = 10
    epsilon: float = 0.5
    reg: RegularizationConfig = field(default_factory=RegularizationConfig)
    div: DivergenceSpec = SQUARED_LOSS
    outer_max_iters: int = 100
    tol: float = 1e-4  # relative objective decrease that counts as converged
    inner_sweeps: int = 2  # factor sweeps per outer iteration
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be at least 1")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.outer_max_iters < 1 or self.inner_sweeps < 1:
            raise ValueError("iteration counts must be at least 1")


@dataclass
class LevelAggregate:
    """Counts and mean predicted scores per rating level (ascending)."""

    counts: np.ndarray
    means: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return self.counts == 0


@dataclass
class ClusterState:
    """Cluster index per user plus one transform row per cluster."""

    assignments: np.ndarray  # (n_users,)
    transforms: np.ndarray  # (n_clusters, n_levels), descending rows
    epsilon: float

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        self.transforms = np.asarray(self.transforms, dtype=float)
        k = self.transforms.shape[0]
        if not 1 <= k <= self.assignments.size:
            raise ValueError("need 1 <= n_clusters <= n_users")
        if self.assignments.min() < 0 or self.assignments.max() >= k:
            raise ValueError("assignment index out of range")
        for row in self.transforms:
            RatingScaleTransform(row, self.epsilon)  # validates margins

    @property
    def n_clusters(self) -> int:
        return self.transforms.shape[0]


@dataclass
class FitResult:
    mode: str
    model: FactorModel
    transforms: np.ndarray | None  # (T, L); None for the plain-MF ablation
    assignments: np.ndarray | None
    epsilon: float
    trace: list  # dicts: {"iter", "phase", "objective"}
    converged: bool

    @property
    def objective(self) -> float:
        return self.trace[-1]["objective"]

    def objective_values(self) -> np.ndarray:
        return np.asarray([rec["objective"] for rec in self.trace])

    def trace_jsonl(self) -> str:
        return "\n".join(json.dumps(rec) for rec in self.trace) + "\n"


def aggregate_levels(levels, scores, n_levels: int) -> LevelAggregate:
    """Per-level counts and mean predicted scores for one user or cluster.

    `levels` holds the 0-based rating level of each of the group's entries
    and `scores` the matching predictions. Levels the group never used get
    count zero and a zero placeholder mean.
    """
    levels = np.asarray(levels, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    if levels.shape != scores.shape:
        raise ValueError("levels and scores must be parallel arrays")
    counts = np.bincount(levels, minlength=n_levels).astype(float)
    sums = np.bincount(levels, weights=scores, minlength=n_levels)
    means = np.divide(sums, counts, out=np.zeros(n_levels), where=counts > 0)
    return LevelAggregate(counts, means)


class _TrainData:
    """Flat triplet arrays plus cached level bookkeeping."""

    def __init__(self, dataset: SparseRatingDataset):
        if dataset.n_ratings == 0:
            raise DataError("cannot train on an empty dataset")
        self.users = dataset.users
        self.items = dataset.items
        self.levels = dataset.levels
        self.n_users = dataset.n_users
        self.n_items = dataset.n_items
        self.n_levels = dataset.n_levels
        self.level_vocab = dataset.level_vocab
        # Transform rows are stored highest level first.
        self.positions = self.n_levels - 1 - self.levels
        self.pairs = np.column_stack([self.users, self.items])

    def scores(self, model: FactorModel) -> np.ndarray:
        return np.einsum(
            "ij,ij->i",
            model.user_factors[self.users],
            model.item_factors[self.items],
        )

    def grouped_aggregates(self, group_of_user, n_groups, scores):
        """Counts and mean scores per (group, level), both (n_groups, L)."""
        keys = group_of_user[self.users] * self.n_levels + self.levels
        size = n_groups * self.n_levels
        counts = np.bincount(keys, minlength=size).astype(float)
        sums = np.bincount(keys, weights=scores, minlength=size)
        counts = counts.reshape(n_groups, self.n_levels)
        sums = sums.reshape(n_groups, self.n_levels)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        return counts, means


def _solve_transform_row(counts, means, eps, div) -> np.ndarray:
    """Fit one transform row from level-order counts and score means."""
    targets_level = np.zeros_like(means)
    used = counts > 0
    targets_level[used] = div.grad_psi(means[used])
    problem = IsotonicProblem(
        targets_level[::-1].copy(), counts[::-1].copy(), eps
    )
    row = fit_margin_isotonic(problem, div).values
    if div.positive_first_arg and row[-1] < 1e-6:
        # Positive-domain generators need positive transform values; a
        # uniform lift keeps the margins intact.
        row = row + (1e-6 - row[-1])
    return row


def _transform_rows(counts, means, eps, div, fallback) -> np.ndarray:
    """Fit a transform row per group; groups with no entries keep `fallback`."""
    rows = np.array(fallback, dtype=float, copy=True)
    for g in range(counts.shape[0]):
        if counts[g].sum() > 0:
            rows[g] = _solve_transform_row(counts[g], means[g], eps, div)
    return rows


def _assignment_costs(counts, means, transforms, div) -> np.ndarray:
    """Reduced divergence of each user's aggregates to each transform."""
    n_groups = counts.shape[0]
    costs = np.empty((n_groups, transforms.shape[0]))
    for k, row in enumerate(transforms):
        terms = div.gap_terms(row[::-1], means)  # level order vs (N, L) means
        costs[:, k] = np.sum(counts * terms, axis=1)
    return costs


def assign_clusters(
    aggregates, transforms, div: DivergenceSpec = SQUARED_LOSS
) -> np.ndarray:
    """Assign each user to the least-divergence transform row.

    `aggregates` is a sequence of per-user :class:`LevelAggregate` values
    and `transforms` a (K, L) array of descending transform rows. The cost
    of a row is the count-weighted divergence between its level values and
    the user's per-level score means; ties resolve to the lowest index.
    """
    transforms = np.atleast_2d(np.asarray(transforms, dtype=float))
    counts = np.vstack([agg.counts for agg in aggregates])
    means = np.vstack([agg.means for agg in aggregates])
    return _assignment_costs(counts, means, transforms, div).argmin(axis=1)


def _targets(transforms, owner, data) -> np.ndarray:
    return transforms[owner[data.users], data.positions]


def _kmeans(points: np.ndarray, k: int, rng, max_iters: int = 100):
    """Seeded Lloyd iteration with k-means++ seeding.

    Empty clusters are reseeded to the point farthest from its center.
    Returns (centers, labels).
    """
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j:] = points[rng.integers(n, size=k - j)]
            break
        centers[j] = points[rng.choice(n, p=closest / total)]
        closest = np.minimum(
            closest, np.sum((points - centers[j]) ** 2, axis=1)
        )

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        dist = np.sum(
            (points[:, None, :] - centers[None, :, :]) ** 2, axis=2
        )
        new_labels = dist.argmin(axis=1)
        for j in range(k):
            members = new_labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                assigned = dist[np.arange(n), new_labels]
                worst = np.argmax(assigned)
                if assigned[worst] > 0:
                    centers[j] = points[worst]
                    new_labels[worst] = j
                # All points coincide with their centers: the cluster
                # stays empty (duplicate center) for downstream repair.
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels


def init_clusters(
    dataset: SparseRatingDataset,
    config: TrainConfig,
    n_result: FitResult | None = None,
) -> ClusterState:
    """Cluster the per-user transforms of a full per-user fit.

    Runs the per-user mode (or reuses `n_result`), then k-means on the N
    transform vectors. Cluster centers are convex combinations of feasible
    transforms and hence feasible themselves, which constructing the state
    re-asserts.
    """
    k = config.n_clusters
    if k > dataset.n_users:
        raise ValueError("more clusters than users")
    if n_result is None:
        n_result = fit_ncmtrf(dataset, config)
    points = n_result.transforms
    distinct = np.unique(points, axis=0).shape[0]
    if k > distinct:
        warnings.warn(
            f"{k} clusters requested but only {distinct} distinct "
            "transforms; duplicate centers will occur"
        )
    rng = np.random.default_rng([config.seed, 1])
    centers, labels = _kmeans(points, k, rng)
    return ClusterState(labels, centers, config.epsilon)


class _Tracer:
    def __init__(self):
        self.records = []

    def add(self, iteration, phase, objective, **extra):
        record = {
            "iter": int(iteration),
            "phase": phase,
            "objective": float(objective),
        }
        record.update(extra)
        self.records.append(record)

    @property
    def last(self):
        return self.records[-1]["objective"]


def _base_rows(n_rows: int, n_levels: int, eps: float) -> np.ndarray:
    base = RatingScaleTransform.base(n_levels, eps).values
    return np.tile(base, (n_rows, 1))


def _run_alternating(
    data: _TrainData,
    config: TrainConfig,
    owner: np.ndarray,
    transforms: np.ndarray,
    assignments: np.ndarray | None,
    model: FactorModel | None,
    relocate: bool,
) -> FitResult:
    """The shared outer loop; `owner` maps users to transform rows."""
    div, reg, eps = config.div, config.reg, config.epsilon
    if model is None:
        model = init_model(data.n_users, data.n_items, config.rank, config.seed)
    trace = _Tracer()

    def objective(trs, own, mdl):
        return regularized_objective(
            data.users, data.items, _targets(trs, own, data), mdl, reg, div
        )

    trace.add(0, "init", objective(transforms, owner, model))
    model = solve_factors(
        data.users,
        data.items,
        _targets(transforms, owner, data),
        model,
        reg,
        div,
        sweeps=config.inner_sweeps,
    )
    trace.add(0, "factorize", objective(transforms, owner, model))

    converged = False
    for it in range(1, config.outer_max_iters + 1):
        prev_objective = trace.last
        prev_assignments = None if assignments is None else assignments.copy()
        scores = data.scores(model)

        if relocate:
            counts, means = data.grouped_aggregates(
                np.arange(data.n_users), data.n_users, scores
            )
            costs = _assignment_costs(counts, means, transforms, div)
            assignments = costs.argmin(axis=1)
            # Revive empty clusters on the worst-fit users; giving a user
            # its own optimal transform cannot increase the objective.
            present = np.bincount(assignments, minlength=transforms.shape[0])
            if (present == 0).any():
                assigned_cost = costs[np.arange(data.n_users), assignments]
                taken: set[int] = set()
                for k in np.flatnonzero(present == 0):
                    order = np.argsort(-assigned_cost)
                    u = next(int(i) for i in order if int(i) not in taken)
                    taken.add(u)
                    transforms[k] = _solve_transform_row(
                        counts[u], means[u], eps, div
                    )
                    assignments[u] = k
                    assigned_cost[u] = 0.0
            owner = assignments
            moved = (
                0
                if prev_assignments is None
                else int((assignments != prev_assignments).sum())
            )
            trace.add(
                it, "assign", objective(transforms, owner, model), changes=moved
            )

        group_counts, group_means = data.grouped_aggregates(
            owner, transforms.shape[0], scores
        )
        transforms = _transform_rows(
            group_counts, group_means, eps, div, transforms
        )
        trace.add(it, "transform", objective(transforms, owner, model))

        model = solve_factors(
            data.users,
            data.items,
            _targets(transforms, owner, data),
            model,
            reg,
            div,
            sweeps=config.inner_sweeps,
        )
        trace.add(it, "factorize", objective(transforms, owner, model))

        drop = prev_objective - trace.last
        stable = (
            prev_assignments is None
            or assignments is None
            or np.array_equal(prev_assignments, assignments)
        )
        if stable and drop < config.tol * max(abs(prev_objective), 1e-12):
            converged = True
            break

    return FitResult(
        mode=config.mode,
        model=model,
        transforms=transforms,
        assignments=None if assignments is None else assignments.copy(),
        epsilon=eps,
        trace=trace.records,
        converged=converged,
    )


def fit_1cmtrf(
    dataset: SparseRatingDataset,
    config: TrainConfig,
    init: FactorModel | None = None,
) -> FitResult:
    """One shared transform for every user."""
    data = _TrainData(dataset)
    cfg = _with_mode(config, "1cmtrf")
    transforms = _base_rows(1, data.n_levels, cfg.epsilon)
    owner = np.zeros(data.n_users, dtype=np.int64)
    return _run_alternating(data, cfg, owner, transforms, None, init, False)


def fit_ncmtrf(
    dataset: SparseRatingDataset,
    config: TrainConfig,
    init: FactorModel | None = None,
) -> FitResult:
    """An individual transform per user."""
    data = _TrainData(dataset)
    cfg = _with_mode(config, "ncmtrf")
    transforms = _base_rows(data.n_users, data.n_levels, cfg.epsilon)
    owner = np.arange(data.n_users, dtype=np.int64)
    return _run_alternating(data, cfg, owner, transforms, None, init, False)


def fit_kcmtrf(
    dataset: SparseRatingDataset,
    config: TrainConfig,
    init_state: ClusterState | None = None,
    init: FactorModel | None = None,
    freeze_assignments: bool = False,
) -> FitResult:
    """K cluster-shared transforms with iterative relocation.

    Without an explicit `init_state`, a per-user fit seeds the clusters via
    k-means on its transforms and its factor model carries over. With one
    cluster this collapses to the shared-transform mode and runs its exact
    trajectory.
    """
    data = _TrainData(dataset)
    cfg = _with_mode(config, "kcmtrf")
    k = cfg.n_clusters
    if not 1 <= k <= data.n_users:
        raise ValueError("need 1 <= n_clusters <= n_users")

    if init_state is None:
        if k == 1:
            transforms = _base_rows(1, data.n_levels, cfg.epsilon)
            assignments = np.zeros(data.n_users, dtype=np.int64)
        else:
            n_result = fit_ncmtrf(dataset, config, init=init)
            state = init_clusters(dataset, cfg, n_result=n_result)
            transforms, assignments = state.transforms, state.assignments
            init = n_result.model
    else:
        if init_state.n_clusters != k:
            raise ValueError("init_state cluster count differs from config")
        if init_state.assignments.size != data.n_users:
            raise ValueError("init_state sized for a different user set")
        transforms = init_state.transforms.copy()
        assignments = init_state.assignments.copy()

    relocate = not freeze_assignments and k > 1
    return _run_alternating(
        data, cfg, assignments, transforms, assignments, init, relocate
    )


def fit_mf(
    dataset: SparseRatingDataset,
    config: TrainConfig,
    init: FactorModel | None = None,
) -> FitResult:
    """Plain factorization of the raw rating values; the no-transform ablation."""
    data = _TrainData(dataset)
    cfg = _with_mode(config, "mf")
    targets = data.level_vocab[data.levels]
    model = init if init is not None else init_model(
        data.n_users, data.n_items, cfg.rank, cfg.seed
    )
    trace = _Tracer()
    trace.add(
        0,
        "init",
        regularized_objective(
            data.users, data.items, targets, model, cfg.reg, cfg.div
        ),
    )
    converged = False
    for it in range(1, cfg.outer_max_iters + 1):
        prev = trace.last
        model = solve_factors(
            data.users, data.items, targets, model, cfg.reg, cfg.div,
            sweeps=cfg.inner_sweeps,
        )
        trace.add(
            it,
            "factorize",
            regularized_objective(
                data.users, data.items, targets, model, cfg.reg, cfg.div
            ),
        )
        if prev - trace.last < cfg.tol * max(abs(prev), 1e-12):
            converged = True
            break
    return FitResult(
        mode="mf",
        model=model,
        transforms=None,
        assignments=None,
        epsilon=cfg.epsilon,
        trace=trace.records,
        converged=converged,
    )


def fit(dataset: SparseRatingDataset, config: TrainConfig) -> FitResult:
    """Dispatch on ``config.mode``."""
    return {
        "1cmtrf": fit_1cmtrf,
        "ncmtrf": fit_ncmtrf,
        "kcmtrf": fit_kcmtrf,
        "mf": fit_mf,
    }[config.mode](dataset, config)


def _with_mode(config: TrainConfig, mode: str) -> TrainConfig:
    if config.mode == mode:
        return config
    return TrainConfig(
        mode=mode,
        n_clusters=config.n_clusters,
        rank=config.rank,
        epsilon=config.epsilon,
        reg=config.reg,
        div=config.div,
        outer_max_iters=config.outer_max_iters,
        tol=config.tol,
        inner_sweeps=config.inner_sweeps,
        seed=config.seed,
    )
