"""Tests for ttgan.preprocess: imputation, one-hot encoding, z-scoring and the Yeo-Johnson pieces."""

import math

import numpy as np
import pytest
from scipy import stats

from ttgan.data import CATEGORICAL, NUMERIC, Dataset, FeatureMeta
from ttgan.preprocess import (
    apply,
    detect_power_law,
    fit,
    fit_yeo_johnson_lambda,
    inverse_transform,
    load_pipeline,
    save_pipeline,
    transform_dataset,
    yeo_johnson,
    yeo_johnson_inverse,
)


def _dataset(columns, y, meta):
    x = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    return Dataset(x, y, tuple(meta))


def _power_law_oracle(values):
    v = np.asarray(values, dtype=float)
    span = v.max() - v.min()
    if span <= 0:
        return False
    width = 0.2 * span
    return any(((v >= a) & (v <= a + width)).sum() >= 0.9 * v.size for a in v)


@pytest.fixture()
def mixed():
    # numeric column with one missing cell, categorical {a, b, c} with one missing cell
    meta = (FeatureMeta("num"), FeatureMeta("cat", CATEGORICAL, ("a", "b", "c")))
    return _dataset([[1.0, 2.0, 3.0, np.nan, 2.0], [0, 0, 1, np.nan, 2]], [0, 0, 0, 1, 1], meta)


class TestFit:
    def test_mean_and_population_std(self):
        d = _dataset([[1.0, 2.0, 3.0]], [0, 0, 1], [FeatureMeta("v")])
        p = fit(d)
        assert p.numeric["v"].mean == pytest.approx(2.0)
        assert p.numeric["v"].scale == pytest.approx(np.std([1.0, 2.0, 3.0]))

    def test_categorical_missing_imputed_to_mode(self, mixed):
        p = fit(mixed)
        assert p.categorical["cat"].impute == "a"
        out = apply(p, mixed)
        # row 3 was missing, gets the "a" column
        assert out[3, 1:].tolist() == [1.0, 0.0, 0.0]

    def test_numeric_mode_tie_breaks_to_smallest(self):
        d = _dataset([[5.0, 5.0, 1.0, 1.0, np.nan]], [0, 0, 0, 1, 1], [FeatureMeta("v")])
        assert fit(d).numeric["v"].impute == 1.0

    def test_constant_feature_kept_with_warning(self):
        d = _dataset([[4.0, 4.0, 4.0]], [0, 0, 1], [FeatureMeta("flat")])
        p = fit(d)
        assert p.numeric["flat"].scale == 1.0
        assert p.constant_features == ["flat"]
        assert any("constant" in w for w in p.warnings)
        assert np.allclose(apply(p, d), 0.0)

    def test_power_law_feature_gets_lambda(self):
        values = [0.0] * 99 + [100.0]
        d = _dataset([values], [0] * 90 + [1] * 10, [FeatureMeta("skew")])
        p = fit(d, enable_yeo_johnson=True)
        lmbda = p.numeric["skew"].yeo_johnson_lambda
        assert lmbda is not None

        grid = np.round(np.arange(-2.0, 2.0 + 1e-9, 0.01), 2)
        best = max(stats.yeojohnson_llf(g, np.asarray(values)) for g in grid)
        assert stats.yeojohnson_llf(lmbda, np.asarray(values)) >= best - 1e-3 * abs(best)

    def test_yeo_johnson_disabled_by_default(self):
        d = _dataset([[0.0] * 99 + [100.0]], [0] * 90 + [1] * 10, [FeatureMeta("skew")])
        assert fit(d).numeric["skew"].yeo_johnson_lambda is None


class TestApply:
    def test_width_counts_one_hot_blocks(self, mixed):
        p = fit(mixed)
        assert p.width == 4
        assert apply(p, mixed).shape == (5, 4)
        assert p.output_columns == ("num", "cat=a", "cat=b", "cat=c")

    def test_fitting_set_is_centered(self, rng):
        d = _dataset([rng.normal(3, 2, 50), rng.exponential(1, 50)], [0] * 45 + [1] * 5,
                     [FeatureMeta("a"), FeatureMeta("b")])
        out = apply(fit(d), d)
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        assert np.allclose(out.std(axis=0), 1.0)

    def test_refit_on_transformed_is_standard(self, rng):
        d = _dataset([rng.normal(10, 5, 40)], [0] * 30 + [1] * 10, [FeatureMeta("a")])
        again = fit(transform_dataset(fit(d), d))
        assert again.numeric["a"].mean == pytest.approx(0.0, abs=1e-9)
        assert again.numeric["a"].scale == pytest.approx(1.0)

    def test_unseen_category_gives_zero_block(self, mixed):
        p = fit(mixed)
        # same schema, but the categorical feature now declares an extra label "z"
        wider = (FeatureMeta("num"), FeatureMeta("cat", CATEGORICAL, ("a", "b", "c", "z")))
        other = _dataset([[1.0, 2.0], [3, 0]], [0, 1], wider)
        out = apply(p, other)
        assert out[0, 1:].tolist() == [0.0, 0.0, 0.0]
        assert out[1, 1:].tolist() == [1.0, 0.0, 0.0]

    def test_schema_mismatch_raises(self, mixed):
        p = fit(mixed)
        other = _dataset([[1.0, 2.0]], [0, 1], [FeatureMeta("something_else")])
        with pytest.raises(ValueError, match="Schema mismatch"):
            apply(p, other)

    def test_without_imputation_missing_numeric_is_zero(self, mixed):
        p = fit(mixed, impute_mode=False)
        out = apply(p, mixed)
        assert out[3, 0] == 0.0
        # and the missing categorical cell is an all-zero block
        assert out[3, 1:].tolist() == [0.0, 0.0, 0.0]


class TestDetectPowerLaw:
    def test_mass_in_narrow_band(self, rng):
        values = np.r_[rng.uniform(0, 1, 95), rng.uniform(9, 10, 5)]
        values[0], values[-1] = 0.0, 10.0
        assert detect_power_law(values)

    def test_uniform_grid_is_not(self):
        assert not detect_power_law(np.linspace(0, 1, 100))

    def test_two_values_half_half_is_not(self):
        assert not detect_power_law([0.0] * 50 + [1.0] * 50)

    def test_constant_is_not(self):
        assert not detect_power_law([3.0] * 10)

    def test_matches_sliding_interval_oracle(self, rng):
        for _ in range(60):
            n = int(rng.integers(2, 200))
            values = np.round(rng.pareto(rng.uniform(0.5, 5), n), 2)
            assert detect_power_law(values) == _power_law_oracle(values)


class TestYeoJohnson:
    def test_lambda_one_is_identity(self):
        assert yeo_johnson(3.7, 1.0) == 3.7
        x = np.array([-5.0, -0.1, 0.0, 2.5])
        assert np.array_equal(yeo_johnson(x, 1.0), x)

    def test_log_branches(self):
        assert yeo_johnson(math.e - 1, 0.0) == pytest.approx(1.0, abs=1e-15)
        assert yeo_johnson(-(math.e - 1), 2.0) == pytest.approx(-1.0, abs=1e-15)

    def test_matches_textbook_formula(self):
        for lmbda in (-1.5, 0.5, 1.7, 2.5):
            x = 2.0
            assert yeo_johnson(x, lmbda) == pytest.approx(((x + 1) ** lmbda - 1) / lmbda)
            x = -2.0
            assert yeo_johnson(x, lmbda) == pytest.approx(-((-x + 1) ** (2 - lmbda) - 1) / (2 - lmbda))

    def test_strictly_monotone(self, rng):
        for lmbda in rng.uniform(-2, 2, 20):
            x = np.sort(rng.uniform(-50, 50, 200))
            assert np.all(np.diff(yeo_johnson(x, lmbda)) > 0)

    def test_inverse_round_trip(self, rng):
        x = rng.uniform(-1e3, 1e3, 500)
        for lmbda in (-2.0, -1.0, 0.0, 0.3, 1.0, 2.0):
            assert np.allclose(yeo_johnson_inverse(yeo_johnson(x, lmbda), lmbda), x, rtol=0, atol=1e-6)

    def test_non_finite_lambda_rejected(self):
        with pytest.raises(ValueError):
            yeo_johnson(1.0, float("nan"))

    def test_fitted_lambda_is_bounded(self, rng):
        assert -2.0 <= fit_yeo_johnson_lambda(rng.exponential(1.0, 300)) <= 2.0


class TestInverseAndSerialization:
    def test_inverse_transform_recovers_raw(self, rng):
        skew = np.r_[np.zeros(95), rng.uniform(50, 100, 5)]
        d = _dataset([rng.normal(size=100), skew], [0] * 90 + [1] * 10, [FeatureMeta("a"), FeatureMeta("b")])
        p = fit(d, enable_yeo_johnson=True)
        assert np.allclose(inverse_transform(p, apply(p, d)), d.x, atol=1e-6)

    def test_inverse_transform_needs_all_numeric(self, mixed):
        p = fit(mixed)
        with pytest.raises(ValueError, match="all-numeric"):
            inverse_transform(p, apply(p, mixed))

    def test_save_and_load(self, mixed, tmp_path):
        p = fit(mixed)
        path = save_pipeline(p, tmp_path / "pipeline.json")
        loaded = load_pipeline(path)
        assert loaded == p
        assert np.array_equal(apply(loaded, mixed), apply(p, mixed))

    def test_transform_dataset_keeps_rows(self, mixed):
        out = transform_dataset(fit(mixed), mixed)
        assert out.n_features == 4
        assert all(f.kind == NUMERIC for f in out.meta)
        assert out.row_ids.tolist() == mixed.row_ids.tolist()
