import numpy as np
import pytest

from cmtrf.core import TrainConfig
from cmtrf.factorization import RegularizationConfig
from cmtrf.synthetic import SynthConfig, generate


def small_config(**overrides):
    defaults = dict(
        mode="1cmtrf",
        rank=3,
        epsilon=0.5,
        reg=RegularizationConfig(0.01, 0.01),
        outer_max_iters=100,
        tol=1e-4,
        inner_sweeps=2,
        seed=0,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


@pytest.fixture(scope="session")
def sd1_small():
    """A 50x40 fully observed gap-scale dataset."""
    return generate(
        SynthConfig(n_users=50, n_items=40, rank=3, kind="sd1", seed=2)
    ).dataset


@pytest.fixture(scope="session")
def sd2_small():
    """A 50x40 sigmoid-scale dataset."""
    return generate(
        SynthConfig(n_users=50, n_items=40, rank=3, kind="sd2", seed=3)
    ).dataset


def rank2_integer_dataset(n_users=24, n_items=18, seed=1):
    """Ratings that ARE a rank-2 score matrix: Z = 1 + row_offset + col_base.

    Every entry lies exactly on the base scale, so a transform equal to the
    base scale together with factors reproducing Z fits the data perfectly.
    """
    from cmtrf.data import SparseRatingDataset

    rng = np.random.default_rng(seed)
    col_base = rng.integers(0, 3, n_items)  # in {0, 1, 2}
    row_off = rng.integers(0, 3, n_users)  # in {0, 1, 2}
    Z = 1 + row_off[:, None] + col_base[None, :]  # values in 1..5, rank 2
    users, items = np.nonzero(np.ones_like(Z, dtype=bool))
    return SparseRatingDataset(
        users,
        items,
        Z[users, items] - 1,
        None,
        np.arange(1.0, 6.0),
        np.arange(n_users),
        np.arange(n_items),
    )
