"""Tests for dataset loading, partitioning and splitting in ttgan.data."""

import numpy as np
import pytest

from ttgan.data import (
    CATEGORICAL,
    NUMERIC,
    Dataset,
    FeatureMeta,
    SplitSpec,
    imbalance_ratio,
    load_csv,
    load_keel,
    partition,
    pick_minority,
    split,
)


KEEL_TEXT = """@relation tiny-keel
@attribute Mcg real [0.11, 1.0]
@attribute Gvh real [0.13, 1.0]
@attribute Colour {red, green}
@attribute Class {positive, negative}
@inputs Mcg, Gvh, Colour
@outputs Class
@data
0.5, 0.4, red, negative
0.6, ?, green, negative
0.7, 0.2, red, negative
0.1, 0.9, green, positive
"""


def _numeric_dataset(x, y, name="toy"):
    x = np.asarray(x, dtype=float)
    meta = tuple(FeatureMeta(f"f{j}") for j in range(x.shape[1]))
    return Dataset(x, y, meta, name=name)


@pytest.fixture()
def keel_file(tmp_path):
    path = tmp_path / "tiny.dat"
    path.write_text(KEEL_TEXT, encoding="utf-8")
    return path


class TestLoadKeel:
    def test_parses_header_and_rows(self, keel_file):
        d = load_keel(keel_file)
        assert d.name == "tiny-keel"
        assert d.n_rows == 4
        assert [f.name for f in d.meta] == ["Mcg", "Gvh", "Colour"]
        assert [f.kind for f in d.meta] == [NUMERIC, NUMERIC, CATEGORICAL]
        assert d.meta[2].categories == ("red", "green")

    def test_rarer_label_is_minority(self, keel_file):
        d = load_keel(keel_file)
        assert d.labels == ("negative", "positive")
        assert list(d.y) == [0, 0, 0, 1]
        assert imbalance_ratio(d) == 3.0

    def test_missing_token_becomes_nan(self, keel_file):
        d = load_keel(keel_file)
        assert np.isnan(d.x[1, 1])
        assert not np.isnan(d.x[0, 1])

    def test_categorical_cells_are_category_codes(self, keel_file):
        d = load_keel(keel_file)
        assert list(d.x[:, 2]) == [0.0, 1.0, 0.0, 1.0]

    def test_output_defaults_to_last_attribute(self, tmp_path):
        path = tmp_path / "noio.dat"
        path.write_text("@relation noio\n@attribute a real\n@attribute cls {0, 1}\n@data\n1,0\n2,0\n3,1\n",
                        encoding="utf-8")
        d = load_keel(path)
        assert d.n_features == 1
        assert list(d.y) == [0, 0, 1]

    def test_empty_data_section_raises(self, tmp_path):
        path = tmp_path / "empty.dat"
        path.write_text("@relation e\n@attribute a real\n@attribute cls {p, n}\n@data\n", encoding="utf-8")
        with pytest.raises(ValueError, match="empty dataset"):
            load_keel(path)

    def test_three_classes_raise(self, tmp_path):
        path = tmp_path / "multi.dat"
        path.write_text("@relation m\n@attribute a real\n@attribute cls {x, y, z}\n@data\n1,x\n2,y\n3,z\n",
                        encoding="utf-8")
        with pytest.raises(ValueError, match="expected 2"):
            load_keel(path)

    def test_single_class_raises(self, tmp_path):
        path = tmp_path / "one.dat"
        path.write_text("@relation o\n@attribute a real\n@attribute cls {p, n}\n@data\n1,p\n2,p\n", encoding="utf-8")
        with pytest.raises(ValueError, match="empty class"):
            load_keel(path)

    def test_malformed_header_raises(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("@relation b\n@attribute broken\n@data\n1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="malformed header"):
            load_keel(path)

    def test_wrong_field_count_raises(self, tmp_path):
        path = tmp_path / "short.dat"
        path.write_text("@relation s\n@attribute a real\n@attribute b real\n@attribute cls {p, n}\n@data\n1,2,p\n3,n\n",
                        encoding="utf-8")
        with pytest.raises(ValueError, match="malformed @data row"):
            load_keel(path)

    def test_loading_twice_is_bitwise_identical(self, keel_file):
        a, b = load_keel(keel_file), load_keel(keel_file)
        assert np.array_equal(a.x, b.x, equal_nan=True)
        assert np.array_equal(a.y, b.y)


class TestLoadCsv:
    def test_explicit_minority_label(self, tmp_path):
        path = tmp_path / "four.csv"
        path.write_text("v,label\n1,a\n2,a\n3,a\n4,b\n", encoding="utf-8")
        d = load_csv(path, "label", minority_label="b")
        x_maj, x_min = partition(d)
        assert len(x_min) == 1
        assert len(x_maj) == 3

    def test_missing_label_column_raises(self, tmp_path):
        path = tmp_path / "nolabel.csv"
        path.write_text("v,w\n1,2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="label column"):
            load_csv(path, "label")

    def test_mixed_column_is_categorical(self, tmp_path):
        path = tmp_path / "mixed.csv"
        path.write_text("v,label\n1.0,a\nx,a\n1.0,b\n", encoding="utf-8")
        d = load_csv(path, "label", minority_label="b")
        assert d.meta[0].kind == CATEGORICAL
        assert len(d.meta[0].categories) == 2

    def test_more_frequent_minority_label_rejected(self, tmp_path):
        path = tmp_path / "flip.csv"
        path.write_text("v,label\n1,a\n2,a\n3,b\n", encoding="utf-8")
        with pytest.raises(ValueError, match="more frequent"):
            load_csv(path, "label", minority_label="a")

    def test_three_labels_raise(self, tmp_path):
        path = tmp_path / "three.csv"
        path.write_text("v,label\n1,a\n2,b\n3,c\n", encoding="utf-8")
        with pytest.raises(ValueError, match="binary label"):
            load_csv(path, "label")


class TestPickMinority:
    def test_rarer_label_wins(self):
        assert pick_minority({"neg": 10, "pos": 2}) == "pos"

    def test_tie_goes_to_lexicographically_larger(self):
        assert pick_minority({"a": 5, "b": 5}) == "b"
        assert pick_minority({"negative": 3, "positive": 3}) == "positive"


class TestPartition:
    def test_rows_follow_labels(self):
        d = _numeric_dataset([[0.0], [1.0], [2.0]], [0, 1, 0])
        x_maj, x_min = partition(d)
        assert x_maj[:, 0].tolist() == [0.0, 2.0]
        assert x_min[:, 0].tolist() == [1.0]

    def test_round_trip_reproduces_rows(self, rng):
        x = rng.normal(size=(20, 3))
        y = np.r_[np.zeros(15, dtype=int), np.ones(5, dtype=int)]
        d = _numeric_dataset(x, rng.permutation(y))
        x_maj, x_min = partition(d)
        joined = np.vstack([x_maj, x_min])
        assert sorted(map(tuple, joined)) == sorted(map(tuple, d.x))

    def test_single_class_rejected_by_dataset(self):
        with pytest.raises(ValueError, match="both classes"):
            _numeric_dataset([[0.0], [1.0]], [0, 0])


class TestImbalanceRatio:
    def test_hundred_to_ten(self):
        d = _numeric_dataset(np.zeros((110, 1)), [0] * 100 + [1] * 10)
        assert imbalance_ratio(d) == 10.0

    def test_balanced(self):
        d = _numeric_dataset(np.zeros((4, 1)), [0, 1, 0, 1])
        assert imbalance_ratio(d) == 1.0


class TestDataset:
    def test_arrays_are_read_only_copies(self):
        x = np.zeros((2, 1))
        d = _numeric_dataset(x, [0, 1])
        x[0, 0] = 5.0
        assert d.x[0, 0] == 0.0
        with pytest.raises(ValueError):
            d.x[0, 0] = 1.0

    def test_categorical_code_outside_categories_rejected(self):
        meta = (FeatureMeta("c", CATEGORICAL, ("a", "b")),)
        with pytest.raises(ValueError, match="outside its categories"):
            Dataset(np.array([[0.0], [2.0]]), [0, 1], meta)

    def test_subset_keeps_row_ids(self):
        d = _numeric_dataset(np.arange(6.0).reshape(6, 1), [0, 0, 0, 1, 0, 1])
        sub = d.subset([1, 3, 5])
        assert sub.row_ids.tolist() == [1, 3, 5]
        assert sub.subset([2]).row_ids.tolist() == [5]

    def test_summary_fields(self):
        d = _numeric_dataset(np.zeros((5, 2)), [0, 0, 0, 0, 1])
        summary = d.summary()
        assert summary["n_rows"] == 5
        assert summary["n_minority"] == 1
        assert summary["imbalance_ratio"] == 4.0


class TestSplit:
    @pytest.fixture()
    def small(self):
        return _numeric_dataset(np.arange(32.0).reshape(32, 1), [0] * 28 + [1] * 4)

    def test_stratified_parts_all_have_minority(self, small):
        parts = split(small, SplitSpec(0.5, 0.25, 0.25, stratified=True, seed=3))
        assert all(p.n_minority >= 1 for p in parts)

    def test_split_is_a_partition(self, small):
        parts = split(small, SplitSpec(0.5, 0.25, 0.25, seed=3))
        ids = np.concatenate([p.row_ids for p in parts])
        assert sorted(ids.tolist()) == list(range(32))

    def test_same_seed_same_indices(self, small):
        a = split(small, SplitSpec(seed=11))
        b = split(small, SplitSpec(seed=11))
        for pa, pb in zip(a, b):
            assert pa.row_ids.tolist() == pb.row_ids.tolist()

    def test_proportions_within_one_row_per_class(self, small):
        train, val, test = split(small, SplitSpec(0.5, 0.25, 0.25, seed=0))
        assert abs(train.n_majority - 14) <= 1
        assert abs(val.n_majority - 7) <= 1
        assert abs(test.n_majority - 7) <= 1

    def test_infeasible_stratification(self):
        d = _numeric_dataset(np.zeros((23, 1)), [0] * 20 + [1] * 3)
        # only three minority rows for three parts works, two does not
        split(d, SplitSpec(seed=0))
        d2 = _numeric_dataset(np.zeros((22, 1)), [0] * 20 + [1] * 2)
        with pytest.raises(ValueError, match="Infeasible stratification"):
            split(d2, SplitSpec(seed=0))

    def test_unstratified_split_without_minority_in_a_part_raises(self):
        d = _numeric_dataset(np.zeros((21, 1)), [0] * 20 + [1])
        with pytest.raises(ValueError, match="infeasible split, the (train|val|test) part has no minority rows"):
            split(d, SplitSpec(stratified=False, seed=0))

    def test_unstratified_split_either_covers_both_classes_or_says_why(self):
        d = _numeric_dataset(np.arange(103.0).reshape(103, 1), [0] * 100 + [1] * 3)
        failures = 0
        for seed in range(20):
            try:
                parts = split(d, SplitSpec(stratified=False, seed=seed))
            except ValueError as exc:
                assert "infeasible split" in str(exc) and "stratified=True" in str(exc)
                failures += 1
            else:
                assert all(p.n_minority >= 1 and p.n_majority >= 1 for p in parts)
        # three minority rows over three parts leave some part empty for most seeds
        assert failures > 0

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SplitSpec(0.5, 0.3, 0.3)
