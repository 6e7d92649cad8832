"""Tests for sample selection and the ROS / SMOTE / Borderline-SMOTE baselines."""

import itertools

import numpy as np
import pytest

from ttgan.data import Dataset, FeatureMeta
from ttgan.resample import (
    ScoredSamples,
    SelectionConfig,
    augment,
    borderline_smote,
    danger_set,
    random_oversample,
    select,
    smote,
    write_selected,
)
from ttgan.utils import read_tsv


def _dataset(x, y, name="toy"):
    x = np.asarray(x, dtype=float)
    return Dataset(x, y, tuple(FeatureMeta(f"f{j}") for j in range(x.shape[1])), name=name)


def _select_oracle(scores, p_max, budget):
    """ Every subset of the right size, keep the one with the largest score sum, ties to the smallest indices. """
    eligible = [i for i, s in enumerate(scores) if s <= p_max]
    size = min(budget, len(eligible))
    best = max(itertools.combinations(eligible, size),
               key=lambda combo: (round(sum(scores[i] for i in combo), 9), [-i for i in combo]))
    return sorted(best)


def _closest_oracle(scores, p_max, budget):
    return sorted(range(len(scores)), key=lambda i: (abs(scores[i] - p_max), i))[:budget]


def _upper_bound_order(scores, p_max):
    return sorted((i for i, s in enumerate(scores) if s <= p_max), key=lambda i: (-scores[i], i))


def _random_dataset(seed, max_rows=300):
    rng = np.random.default_rng(seed)
    n_min = int(rng.integers(3, 30))
    n_maj = int(rng.integers(n_min + 1, max_rows - n_min + 1))
    width = int(rng.integers(1, 5))
    x = np.vstack([rng.normal(size=(n_maj, width)), rng.normal(rng.uniform(0.0, 2.0), 1.0, size=(n_min, width))])
    return _dataset(x, [0] * n_maj + [1] * n_min, name=f"random-{seed}")


def _danger_oracle(d, m):
    """ Plain loop over minority rows, m nearest rows of the whole set by a full sort. """
    m_eff = min(m, d.n_rows - 1)
    danger, noise = [], []
    for pos, row in enumerate(np.flatnonzero(d.y == 1)):
        distances = np.linalg.norm(d.x - d.x[row], axis=1)
        distances[row] = np.inf
        majority = int((d.y[np.argsort(distances, kind="stable")[:m_eff]] == 0).sum())
        if majority == m_eff:
            noise.append(pos)
        elif 2 * majority >= m_eff:
            danger.append(pos)
    return danger, noise


def _assert_on_neighbour_segments(d, aug, k):
    """ Each synthetic row is base + u * (nn - base) with u in [0, 1] and nn one of the base's k nearest minority rows. """
    x_min = d.x[d.y == 1]
    k = min(k, x_min.shape[0] - 1)
    for row, source in zip(aug.x_selected, aug.provenance):
        assert d.y[source] == 1
        base = d.x[source]
        distances = np.linalg.norm(x_min - base, axis=1)
        neighbours = x_min[np.argsort(distances, kind="stable")[1:k + 1]]
        on_segment = False
        for nn in neighbours:
            direction = nn - base
            u = float(np.dot(row - base, direction) / np.dot(direction, direction))
            if -1e-12 <= u <= 1 + 1e-12 and np.allclose(base + u * direction, row, atol=1e-9):
                on_segment = True
        assert on_segment


@pytest.fixture()
def imbalanced(rng):
    x = np.vstack([rng.normal(0.0, 1.0, size=(28, 2)), rng.normal(3.0, 0.3, size=(4, 2))])
    return _dataset(x, [0] * 28 + [1] * 4)


class TestSelect:
    def test_highest_eligible_scores_first(self):
        c = ScoredSamples(np.zeros((4, 1)), [0.95, 0.7, 0.6, 0.2])
        assert select(c, SelectionConfig(p_max=0.8, s=1.0), 2) == [1, 2]

    def test_budget_larger_than_eligible(self):
        c = ScoredSamples(np.zeros((4, 1)), [0.95, 0.7, 0.6, 0.2])
        assert select(c, SelectionConfig(p_max=0.8, s=5.0), 2) == [1, 2, 3]

    def test_p_max_zero_selects_nothing_above_zero(self):
        c = ScoredSamples(np.zeros((3, 1)), [0.1, 0.5, 0.9])
        assert select(c, SelectionConfig(p_max=0.0, s=1.0), 3) == []

    def test_ties_break_by_ascending_index(self):
        c = ScoredSamples(np.zeros((4, 1)), [0.5, 0.5, 0.5, 0.5])
        assert select(c, SelectionConfig(p_max=1.0, s=1.0), 2) == [0, 1]

    def test_fractional_budget_floors(self):
        c = ScoredSamples(np.zeros((100, 1)), np.linspace(0, 1, 100))
        assert len(select(c, SelectionConfig(p_max=1.0, s=4.35), 20)) == 87
        assert len(select(c, SelectionConfig(p_max=1.0, s=0.33), 10)) == 3

    def test_matches_brute_force(self, rng):
        for _ in range(40):
            n = int(rng.integers(1, 9))
            scores = np.round(rng.uniform(0, 1, n), 1)
            p_max = float(rng.choice([0.3, 0.5, 0.8, 1.0]))
            count = int(rng.integers(1, 5))
            picked = select(ScoredSamples(np.zeros((n, 1)), scores), SelectionConfig(p_max, 1.0), count)
            assert sorted(picked) == _select_oracle(list(scores), p_max, count)
            assert all(scores[i] <= p_max for i in picked)

    def test_closest_to_p_max_variant(self):
        c = ScoredSamples(np.zeros((4, 1)), [0.95, 0.7, 0.6, 0.2])
        cfg = SelectionConfig(p_max=0.8, s=1.0, variant="closest_to_pmax")
        assert select(c, cfg, 2) == [1, 0]

    def test_closest_to_p_max_ties_break_by_index(self):
        # every candidate is exactly 0.25 away from p_max
        c = ScoredSamples(np.zeros((4, 1)), [0.75, 0.25, 0.75, 0.25])
        cfg = SelectionConfig(p_max=0.5, s=1.0, variant="closest_to_pmax")
        assert select(c, cfg, 3) == [0, 1, 2]

    @pytest.mark.parametrize("variant", ["upper_bound", "closest_to_pmax"])
    def test_matches_sorted_oracle(self, rng, variant):
        for _ in range(100):
            n = int(rng.integers(0, 60))
            # coarse grid so equal scores and equal distances are common
            scores = np.round(rng.uniform(0, 1, n), 1)
            p_max = float(rng.choice([0.0, 0.3, 0.5, 0.8, 1.0]))
            cfg = SelectionConfig(p_max, float(rng.choice([0.5, 1.0, 2.0, 3.5])), variant)
            count = int(rng.integers(1, 10))
            picked = select(ScoredSamples(np.zeros((n, 1)), scores), cfg, count)

            budget = cfg.budget(count)
            if variant == "upper_bound":
                assert picked == _upper_bound_order(list(scores), p_max)[:budget]
            else:
                assert picked == _closest_oracle(list(scores), p_max, budget)
            assert len(picked) == len(set(picked)) <= budget

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="p_max"):
            SelectionConfig(p_max=1.5)
        with pytest.raises(ValueError, match="s must be"):
            SelectionConfig(s=0.0)


class TestAugment:
    def test_appends_minority_rows(self, imbalanced):
        aug = augment(imbalanced, np.ones((3, 2)), method="x")
        assert aug.n_added == 3
        assert aug.x.shape == (35, 2)
        assert aug.y[-3:].tolist() == [1, 1, 1]
        assert aug.to_dataset().row_ids[-3:].tolist() == [-1, -1, -1]

    def test_empty_selection(self, imbalanced):
        aug = augment(imbalanced, np.zeros((0, 2)))
        assert aug.n_added == 0
        assert np.array_equal(aug.x, imbalanced.x)

    def test_width_mismatch_raises(self, imbalanced):
        with pytest.raises(ValueError, match="do not match dataset width"):
            augment(imbalanced, np.zeros((1, 3)))

    def test_base_is_untouched(self, imbalanced):
        before = imbalanced.x.copy()
        augment(imbalanced, np.full((2, 2), 9.0))
        assert np.array_equal(imbalanced.x, before)


class TestRandomOversample:
    def test_balances_classes(self, imbalanced):
        aug = random_oversample(imbalanced, seed=0)
        assert aug.n_added == 24
        assert int((aug.y == 1).sum()) == int((aug.y == 0).sum())

    def test_rows_are_copies_of_minority_rows(self, imbalanced):
        aug = random_oversample(imbalanced, seed=1)
        minority = {tuple(row) for row in imbalanced.x[imbalanced.y == 1]}
        assert all(tuple(row) in minority for row in aug.x_selected)
        assert np.array_equal(aug.x_selected, imbalanced.x[aug.provenance])


class TestSmote:
    def test_rows_lie_on_segments_to_a_k_nearest_neighbour(self, rng):
        x = np.vstack([rng.normal(size=(30, 2)), rng.normal(4.0, 1.0, size=(7, 2))])
        d = _dataset(x, [0] * 30 + [1] * 7)
        aug = smote(d, k=3, seed=5)
        assert aug.n_added == 23

        x_min = d.x[d.y == 1]
        for row, source in zip(aug.x_selected, aug.provenance):
            base = d.x[source]
            distances = np.linalg.norm(x_min - base, axis=1)
            neighbours = x_min[np.argsort(distances)[1:4]]
            # row = base + u * (nn - base) for some neighbour nn and u in [0, 1]
            on_segment = False
            for nn in neighbours:
                direction = nn - base
                u = float(np.dot(row - base, direction) / np.dot(direction, direction))
                if -1e-12 <= u <= 1 + 1e-12 and np.allclose(base + u * direction, row, atol=1e-9):
                    on_segment = True
            assert on_segment

    @pytest.mark.parametrize("seed", range(20))
    def test_random_datasets_stay_on_neighbour_segments(self, seed):
        d = _random_dataset(seed)
        k = int(np.random.default_rng(seed).integers(1, 8))
        aug = smote(d, k=k, seed=seed)
        assert aug.n_added == d.n_majority - d.n_minority
        _assert_on_neighbour_segments(d, aug, k)

    def test_same_seed_same_rows(self, imbalanced):
        assert np.array_equal(smote(imbalanced, seed=2).x_selected, smote(imbalanced, seed=2).x_selected)

    def test_k_larger_than_minority_is_clamped(self, imbalanced):
        assert smote(imbalanced, k=50, seed=0).n_added == 24

    def test_single_minority_row_raises(self):
        d = _dataset(np.arange(8.0).reshape(4, 2), [0, 0, 0, 1])
        with pytest.raises(ValueError, match="at least 2 minority rows"):
            smote(d)


class TestBorderlineSmote:
    @pytest.fixture()
    def labelled_line(self):
        # minority rows near 0 (safe cluster), at 10 (inside majority, noise), at 5.5 and 5.7 (on the border)
        x = np.array([[0.0], [0.1], [0.2], [5.0], [5.2], [5.4], [5.5], [5.6], [9.8], [10.0], [10.2],
                      [-0.1], [6.0], [5.7], [20.0], [21.0], [22.0]])
        y = [1, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0]
        return _dataset(x, y)

    def test_noise_danger_and_safe_rules(self, labelled_line):
        danger, noise = danger_set(labelled_line, m=3)
        minority_rows = np.flatnonzero(labelled_line.y == 1)
        # minority block order: 0.0, 0.1, 0.2, 5.5, 10.0, -0.1, 5.7
        assert labelled_line.x[minority_rows[noise], 0].tolist() == [10.0]
        assert labelled_line.x[minority_rows[danger], 0].tolist() == [5.5, 5.7]

    def test_matches_neighbourhood_oracle(self, rng):
        x = np.vstack([rng.normal(size=(40, 2)), rng.normal(1.0, 1.0, size=(10, 2))])
        d = _dataset(x, np.array([0] * 40 + [1] * 10))
        danger, noise = danger_set(d, 6)
        expected_danger, expected_noise = _danger_oracle(d, 6)
        assert danger.tolist() == expected_danger
        assert noise.tolist() == expected_noise

    @pytest.mark.parametrize("seed", range(20))
    def test_random_datasets_use_only_danger_bases(self, seed):
        d = _random_dataset(seed)
        params = np.random.default_rng(seed + 1000)
        k, m = int(params.integers(1, 8)), int(params.choice([3, 5, 10]))
        expected_danger, expected_noise = _danger_oracle(d, m)

        danger, noise = danger_set(d, m)
        assert danger.tolist() == expected_danger
        assert noise.tolist() == expected_noise

        aug = borderline_smote(d, k=k, m=m, seed=seed)
        minority_rows = np.flatnonzero(d.y == 1)
        if expected_danger:
            assert set(aug.provenance.tolist()) <= set(minority_rows[expected_danger].tolist())
            assert aug.notes == ()
        else:
            assert aug.notes == ("danger set empty, fell back to plain SMOTE",)
        _assert_on_neighbour_segments(d, aug, k)

    def test_bases_come_from_the_danger_set(self, labelled_line):
        aug = borderline_smote(labelled_line, k=2, m=3, seed=0)
        assert aug.n_added == 3
        assert set(labelled_line.x[aug.provenance, 0].tolist()) <= {5.5, 5.7}
        assert aug.notes == ()

    def test_empty_danger_set_falls_back_to_smote(self, rng):
        # two well separated clusters: every minority row is safe
        x = np.vstack([rng.normal(0.0, 0.1, size=(20, 2)), rng.normal(50.0, 0.1, size=(5, 2))])
        d = _dataset(x, [0] * 20 + [1] * 5)
        aug = borderline_smote(d, k=2, m=3, seed=0)
        assert aug.notes == ("danger set empty, fell back to plain SMOTE",)
        assert aug.n_added == 15


class TestWriteSelected:
    def test_writes_rows_with_provenance(self, imbalanced, tmp_path):
        aug = random_oversample(imbalanced, seed=0)
        rows = read_tsv(write_selected(aug, tmp_path / "selected.tsv"))
        assert len(rows) == 24
        assert list(rows[0]) == ["f0", "f1", "provenance"]
        assert int(rows[0]["provenance"]) == int(aug.provenance[0])

    def test_missing_provenance_is_empty(self, imbalanced, tmp_path):
        aug = augment(imbalanced, np.zeros((2, 2)))
        rows = read_tsv(write_selected(aug, tmp_path / "selected.tsv", columns=["a", "b"]))
        assert rows[0]["provenance"] == ""
        assert rows[1]["a"] == "0.0"
