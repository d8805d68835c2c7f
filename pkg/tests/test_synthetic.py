import numpy as np
import pytest

from cmtrf.synthetic import (
    SynthConfig,
    generate,
    nearest_level,
    piecewise_apply,
    piecewise_inverse,
    pseudo_ratings,
    sd2_apply,
    sd2_inverse,
)


def _small(kind, **kw):
    defaults = dict(n_users=40, n_items=30, rank=3, kind=kind, seed=5)
    defaults.update(kw)
    return SynthConfig(**defaults)


class TestScaleDraws:
    def test_gap_construction_stays_in_band(self):
        result = generate(_small("sd1"))
        gaps = np.diff(result.transforms, axis=1)
        assert gaps.min() >= 0.5
        assert gaps.max() <= 2.0

    def test_first_level_is_gaussian_draw(self):
        result = generate(_small("sd1", n_users=4000, n_items=2))
        first = result.transforms[:, 0]
        assert abs(first.mean() - 1.0) < 0.1
        assert abs(first.std() - 1.0) < 0.1

    def test_scales_strictly_increasing(self):
        for kind in ("sd1", "sd2"):
            result = generate(_small(kind))
            assert (np.diff(result.transforms, axis=1) > 0).all()

    def test_sigmoid_inverse_round_trip(self):
        rng = np.random.default_rng(0)
        for c in rng.uniform(0.2, 2.0, 10):
            y = rng.normal(0, 3, 50)
            x = sd2_inverse(c, y)
            assert x.min() > 0.5 and x.max() < 5.5
            np.testing.assert_allclose(sd2_apply(c, x), y, atol=1e-9)

    def test_sigmoid_curvatures_positive(self):
        result = generate(_small("sd2"))
        assert result.curvatures.min() >= 0.1


class TestQuantization:
    def test_score_at_knot_recovers_level(self):
        result = generate(_small("sd1"))
        knots = result.transforms[7]
        assert nearest_level(knots, knots[2]) == 3  # 1-based level

    def test_ratings_within_scale(self):
        for kind in ("sd1", "sd2"):
            ds = generate(_small(kind)).dataset
            assert ds.levels.min() >= 0
            assert ds.levels.max() <= 4
            np.testing.assert_allclose(ds.level_vocab, [1, 2, 3, 4, 5])

    def test_nearest_level_boundaries(self):
        knots = np.array([1.0, 2.0, 4.0])
        np.testing.assert_array_equal(
            nearest_level(knots, np.array([-10.0, 1.4, 1.6, 2.9, 3.1, 99.0])),
            [1, 1, 2, 2, 3, 3],
        )


class TestDeterminismAndRank:
    def test_same_seed_same_dataset(self):
        a = generate(_small("sd2", density=0.5))
        b = generate(_small("sd2", density=0.5))
        np.testing.assert_array_equal(a.dataset.users, b.dataset.users)
        np.testing.assert_array_equal(a.dataset.levels, b.dataset.levels)
        np.testing.assert_array_equal(a.transforms, b.transforms)

    def test_different_seed_differs(self):
        a = generate(_small("sd1"))
        b = generate(_small("sd1", seed=6))
        assert not np.array_equal(a.dataset.levels, b.dataset.levels)

    def test_quantized_matrix_not_low_rank_but_transforms_are(self):
        config = _small("sd1", n_users=60, n_items=50, rank=4)
        X, truth = pseudo_ratings(config)
        # Pushing each row through its own scale recovers the score matrix.
        Z = np.vstack(
            [piecewise_apply(truth.transforms[i], X[i]) for i in range(60)]
        )
        expected = truth.user_factors @ truth.item_factors.T
        np.testing.assert_allclose(Z, expected, atol=1e-8)
        assert np.linalg.matrix_rank(Z, tol=1e-6) <= 4
        # The raw quantized ratings matrix, in contrast, has high rank.
        full = generate(config)
        dense = np.zeros((60, 50))
        dense[full.dataset.users, full.dataset.items] = full.dataset.raw_values
        assert np.linalg.matrix_rank(dense, tol=1e-6) > 4

    def test_piecewise_inverse_round_trip(self):
        rng = np.random.default_rng(3)
        knots = np.cumsum(rng.uniform(0.5, 2.0, 5))
        z = rng.normal(0, 4, 100)
        np.testing.assert_allclose(
            piecewise_apply(knots, piecewise_inverse(knots, z)), z, atol=1e-9
        )


class TestConfigValidation:
    def test_density_bounds(self):
        with pytest.raises(ValueError):
            SynthConfig(density=0.0)
        with pytest.raises(ValueError):
            SynthConfig(density=1.5)

    def test_kind_checked(self):
        with pytest.raises(ValueError):
            SynthConfig(kind="sd3")

    def test_density_subsampling(self):
        ds = generate(_small("sd1", density=0.3, n_users=100, n_items=100)).dataset
        assert 0.2 < ds.n_ratings / 10000 < 0.4
