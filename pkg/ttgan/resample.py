# Resampling: choosing which generated rows to keep, plus the classical oversampling baselines it is compared to.
# Every function takes a preprocessed (all-numeric) Dataset and never modifies it.

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ttgan.data import Dataset
from ttgan.utils import write_tsv

SELECTION_VARIANTS = ("upper_bound", "closest_to_pmax")

SMOTE_K = 5
BORDERLINE_M = 10

# guards floor(s * count) against products like 4.35 * 20 = 86.99999999999999
_BUDGET_SLACK = 1e-9


@dataclass(frozen=True)
class SelectionConfig:
    p_max: float = 1.0
    s: float = 1.0
    variant: str = "upper_bound"

    def __post_init__(self):
        if not 0.0 <= self.p_max <= 1.0:
            raise ValueError(f"p_max must be in [0, 1], got {self.p_max}")
        if not math.isfinite(self.s) or self.s <= 0:
            raise ValueError(f"s must be a finite positive multiple of the minority count, got {self.s}")
        if self.variant not in SELECTION_VARIANTS:
            raise ValueError(f"Unknown selection variant {self.variant!r}, expected one of {SELECTION_VARIANTS}")

    def budget(self, minority_count: int) -> int:
        return max(0, math.floor(self.s * minority_count + _BUDGET_SLACK))


@dataclass(frozen=True)
class ScoredSamples:
    rows: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if rows.shape[0] != scores.shape[0]:
            raise ValueError(f"{rows.shape[0]} candidate rows but {scores.shape[0]} scores")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    """
    The base dataset plus accepted synthetic minority rows.

    provenance[i] is the row position in ``base`` that synthetic row i came from: the majority row it was translated
    from (TTGAN), the minority seed row (SMOTE family) or the copied row (ROS). None when there is no source row.
    """

    base: Dataset
    x_selected: np.ndarray
    provenance: np.ndarray | None = None
    method: str = "none"
    notes: tuple[str, ...] = field(default=())

    @property
    def n_added(self) -> int:
        return self.x_selected.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.vstack([self.base.x, self.x_selected])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.base.y, np.ones(self.n_added, dtype=np.int64)])

    def to_dataset(self) -> Dataset:
        # synthetic rows have no original row, they get id -1
        row_ids = np.concatenate([self.base.row_ids, np.full(self.n_added, -1, dtype=np.int64)])
        return Dataset(self.x, self.y, self.base.meta, f"{self.base.name}+{self.method}", self.base.labels, row_ids)


def select(c: ScoredSamples, cfg: SelectionConfig, minority_count: int) -> list[int]:
    if minority_count < 1:
        raise ValueError(f"minority_count must be >= 1, got {minority_count}")

    budget = cfg.budget(minority_count)
    index = np.arange(c.scores.size)

    if cfg.variant == "upper_bound":
        keep = index[c.scores <= cfg.p_max]
        # lexsort sorts by the last key first: score descending, then index ascending
        order = keep[np.lexsort((keep, -c.scores[keep]))]
    else:
        distance = np.abs(c.scores - cfg.p_max)
        order = index[np.lexsort((index, distance))]

    return [int(i) for i in order[:budget]]


def augment(d: Dataset, x_selected, provenance=None, method: str = "none", notes=()) -> AugmentedDataset:
    x_selected = np.asarray(x_selected, dtype=np.float64)
    if x_selected.size == 0:
        x_selected = x_selected.reshape(0, d.n_features)
    if x_selected.ndim != 2 or x_selected.shape[1] != d.n_features:
        raise ValueError(f"Synthetic rows of shape {x_selected.shape} do not match dataset width {d.n_features}")

    if provenance is not None:
        provenance = np.asarray(provenance, dtype=np.int64).reshape(-1)
        if provenance.shape[0] != x_selected.shape[0]:
            raise ValueError("provenance needs one entry per synthetic row")

    return AugmentedDataset(d, x_selected, provenance, method, tuple(notes))


def _n_to_balance(d: Dataset) -> int:
    return max(0, d.n_majority - d.n_minority)


def random_oversample(d: Dataset, seed: int = 0) -> AugmentedDataset:
    rng = np.random.default_rng(seed)
    minority_rows = np.flatnonzero(d.y == 1)
    picks = minority_rows[rng.integers(0, minority_rows.size, size=_n_to_balance(d))]
    logging.info(f"ROS on {d.name}: duplicated {picks.size} minority rows")
    return augment(d, d.x[picks], picks, method="ros")


def _minority_neighbours(x_min: np.ndarray, k: int) -> np.ndarray:
    """ Row i holds the positions of the k nearest other minority rows, exact brute-force Euclidean scan. """

    distances = cdist(x_min, x_min)
    np.fill_diagonal(distances, np.inf)
    # stable sort so equal distances resolve to the lower row position
    return np.argsort(distances, axis=1, kind="stable")[:, :k]


def _interpolate(d: Dataset, bases: np.ndarray, k: int, n: int, rng: np.random.Generator,
                 method: str, notes=()) -> AugmentedDataset:
    """ n rows x + u*(nn - x), x drawn from ``bases`` (positions inside the minority block), nn among its k minority neighbours. """

    minority_rows = np.flatnonzero(d.y == 1)
    x_min = d.x[minority_rows]
    neighbours = _minority_neighbours(x_min, min(k, x_min.shape[0] - 1))

    base_pick = bases[rng.integers(0, bases.size, size=n)]
    partner_pick = neighbours[base_pick, rng.integers(0, neighbours.shape[1], size=n)]
    u = rng.uniform(0.0, 1.0, size=(n, 1))

    x_base = x_min[base_pick]
    synthetic = x_base + u * (x_min[partner_pick] - x_base)
    return augment(d, synthetic, minority_rows[base_pick], method=method, notes=notes)


def _check_smote_input(d: Dataset, k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if d.n_minority < 2:
        raise ValueError(f"{d.name}: SMOTE needs at least 2 minority rows, found {d.n_minority} (no neighbour to interpolate with)")


def smote(d: Dataset, k: int = SMOTE_K, seed: int = 0) -> AugmentedDataset:
    _check_smote_input(d, k)
    rng = np.random.default_rng(seed)
    n = _n_to_balance(d)
    aug = _interpolate(d, np.arange(d.n_minority), k, n, rng, method="smote")
    logging.info(f"SMOTE on {d.name}: generated {n} rows (k={k})")
    return aug


def danger_set(d: Dataset, m: int = BORDERLINE_M) -> tuple[np.ndarray, np.ndarray]:
    """
    Classify minority rows by their m nearest neighbours over the whole dataset (self excluded).
    Returns (danger, noise) as positions inside the minority block:
        - noise: all m neighbours are majority
        - danger: m/2 <= majority neighbours < m
        - safe: everything else
    """

    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    minority_rows = np.flatnonzero(d.y == 1)
    m_eff = min(m, d.n_rows - 1)

    distances = cdist(d.x[minority_rows], d.x)
    distances[np.arange(minority_rows.size), minority_rows] = np.inf
    nearest = np.argsort(distances, axis=1, kind="stable")[:, :m_eff]
    majority_counts = (d.y[nearest] == 0).sum(axis=1)

    noise = np.flatnonzero(majority_counts == m_eff)
    danger = np.flatnonzero((2 * majority_counts >= m_eff) & (majority_counts < m_eff))
    return danger, noise


def borderline_smote(d: Dataset, k: int = SMOTE_K, m: int = BORDERLINE_M, seed: int = 0) -> AugmentedDataset:
    """ Borderline-1: SMOTE whose base rows come only from the DANGER set, partners are any minority rows. """

    _check_smote_input(d, k)
    rng = np.random.default_rng(seed)
    n = _n_to_balance(d)
    danger, noise = danger_set(d, m)

    if danger.size == 0:
        note = "danger set empty, fell back to plain SMOTE"
        logging.warning(f"Borderline-SMOTE on {d.name}: {note}")
        return _interpolate(d, np.arange(d.n_minority), k, n, rng, method="bsmote", notes=(note,))

    logging.info(f"Borderline-SMOTE on {d.name}: {danger.size} danger / {noise.size} noise minority rows, "
                 f"generated {n} rows (k={k}, m={m})")
    return _interpolate(d, danger, k, n, rng, method="bsmote")


def write_selected(aug: AugmentedDataset, path, columns=None):
    """ One row per synthetic sample with its provenance (empty when there is none). """

    columns = list(columns) if columns is not None else [f.name for f in aug.base.meta]
    provenance = aug.provenance if aug.provenance is not None else [None] * aug.n_added
    rows = ([*map(float, row), None if source is None else int(source)] for row, source in zip(aug.x_selected, provenance))
    return write_tsv(path, [*columns, "provenance"], rows)
