"""
Dataset representation plus the KEEL and CSV loaders.

Every loader maps the rarer label to y=1 (minority) and the other to y=0 (majority). Categorical cells are stored as the
index of their label in ``FeatureMeta.categories`` and missing cells as NaN, so ``Dataset.x`` is always a float matrix.
"""

import csv
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

NUMERIC = "numeric"
CATEGORICAL = "categorical"

KEEL_MISSING_TOKEN = "?"
CSV_MISSING_TOKEN = ""

# KEEL writes real/integer ranges like "real [0.0, 1.0]" or "integer[1,29]", categoricals as "{a, b, c}"
_KEEL_ATTRIBUTE = re.compile(r"^@attribute\s+('[^']*'|\"[^\"]*\"|[^\s{]+)\s*(\{.*\}|(?:real|integer|numeric)\b.*)$",
                             re.IGNORECASE)


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: str = NUMERIC
    categories: tuple[str, ...] = ()
    missing_token: str = KEEL_MISSING_TOKEN

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"Feature {self.name!r} has unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind == CATEGORICAL and not self.categories:
            raise ValueError(f"Categorical feature {self.name!r} needs at least one category")
        if self.kind == NUMERIC and self.categories:
            raise ValueError(f"Numeric feature {self.name!r} cannot carry categories")

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "categories": list(self.categories),
                "missing_token": self.missing_token}


@dataclass(frozen=True, eq=False)
class Dataset:
    """ Immutable binary dataset: y=0 majority, y=1 minority. ``row_ids`` are the original row positions. """

    x: np.ndarray
    y: np.ndarray
    meta: tuple[FeatureMeta, ...]
    name: str = "dataset"
    labels: tuple[str, str] = ("0", "1")
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        # own copies, then freeze them so concurrent readers can share one Dataset
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        meta = tuple(self.meta)

        if x.ndim != 2:
            raise ValueError(f"Dataset {self.name!r}: x must be a 2-D matrix, got shape {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"Dataset {self.name!r}: {x.shape[0]} rows in x but {y.shape[0]} labels")
        if x.shape[1] != len(meta):
            raise ValueError(f"Dataset {self.name!r}: {x.shape[1]} columns but {len(meta)} feature descriptions")
        if not np.isin(y, (0, 1)).all():
            raise ValueError(f"Dataset {self.name!r}: labels must be 0 (majority) or 1 (minority)")
        if x.shape[0] == 0:
            raise ValueError(f"Dataset {self.name!r}: empty dataset")
        if not (y == 0).any() or not (y == 1).any():
            raise ValueError(f"Dataset {self.name!r}: both classes must be present (empty class)")

        for j, feature in enumerate(meta):
            column = x[:, j]
            present = column[~np.isnan(column)]
            if feature.kind == CATEGORICAL:
                valid = (present >= 0) & (present < len(feature.categories)) & (present == np.floor(present))
                if not valid.all():
                    raise ValueError(f"Dataset {self.name!r}: feature {feature.name!r} has codes outside its categories")
            elif np.isinf(present).any():
                raise ValueError(f"Dataset {self.name!r}: feature {feature.name!r} has infinite values")

        row_ids = np.arange(x.shape[0]) if self.row_ids is None else np.array(self.row_ids, dtype=np.int64).reshape(-1)
        if row_ids.shape[0] != x.shape[0]:
            raise ValueError(f"Dataset {self.name!r}: row_ids length does not match the number of rows")

        for array in (x, y, row_ids):
            array.setflags(write=False)

        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def n_minority(self) -> int:
        return int(self.y.sum())

    @property
    def n_majority(self) -> int:
        return self.n_rows - self.n_minority

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.x[indices], self.y[indices], self.meta, self.name, self.labels, self.row_ids[indices])

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_rows": self.n_rows,
            "n_features": self.n_features,
            "n_majority": self.n_majority,
            "n_minority": self.n_minority,
            "imbalance_ratio": imbalance_ratio(self),
            "majority_label": self.labels[0],
            "minority_label": self.labels[1],
            "features": [f.to_dict() for f in self.meta],
        }


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fractions = self.fractions
        if any(not 0.0 < f < 1.0 for f in fractions):
            raise ValueError(f"Split fractions must each be in (0, 1), got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"Split fractions must sum to 1, got {sum(fractions)}")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)


def pick_minority(counts: dict[str, int]) -> str:
    """ The strictly rarer label, exact ties go to the lexicographically larger label. """

    if len(counts) != 2:
        raise ValueError(f"Expected exactly two class labels, found {len(counts)}: {sorted(counts)}")
    return min(counts, key=lambda label: (counts[label], _descending_key(label)))


def _descending_key(label: str) -> tuple:
    # min() over negated code points picks the lexicographically larger label
    return tuple(-ord(c) for c in label) + (1,)


def _build_dataset(frame: pd.DataFrame, label_column: str, metas: list[FeatureMeta], name: str,
                   minority_label: str | None) -> Dataset:
    """ Shared tail of both loaders: map labels to 0/1 and encode every feature column as floats. """

    labels = frame[label_column].astype(str).str.strip()
    counts = labels.value_counts().to_dict()
    if len(counts) > 2:
        raise ValueError(f"{name}: expected a binary label, found {len(counts)} classes {sorted(counts)}")
    if len(counts) < 2:
        raise ValueError(f"{name}: empty class, only label(s) {sorted(counts)} present")

    if minority_label is None:
        minority = pick_minority(counts)
    else:
        minority = str(minority_label)
        if minority not in counts:
            raise ValueError(f"{name}: minority label {minority!r} not found among {sorted(counts)}")
        other = next(label for label in counts if label != minority)
        if counts[minority] > counts[other]:
            raise ValueError(f"{name}: minority label {minority!r} is the more frequent class "
                             f"({counts[minority]} vs {counts[other]})")
    majority = next(label for label in counts if label != minority)

    y = (labels == minority).to_numpy().astype(np.int64)
    x = np.empty((len(frame), len(metas)), dtype=np.float64)

    for j, feature in enumerate(metas):
        raw = frame[feature.name].astype(str).str.strip()
        missing = (raw == feature.missing_token).to_numpy()

        if feature.kind == NUMERIC:
            values = pd.to_numeric(raw.where(~missing), errors="coerce").to_numpy(dtype=np.float64)
            bad = np.isnan(values) & ~missing
            if bad.any():
                example = raw[bad].iloc[0]
                raise ValueError(f"{name}: numeric feature {feature.name!r} has non-numeric value {example!r}")
            x[:, j] = values
        else:
            lookup = {label: code for code, label in enumerate(feature.categories)}
            codes = raw.map(lookup)
            bad = codes.isna().to_numpy() & ~missing
            if bad.any():
                example = raw[bad].iloc[0]
                raise ValueError(f"{name}: feature {feature.name!r} value {example!r} is not a declared category")
            x[:, j] = np.where(missing, np.nan, codes.to_numpy(dtype=np.float64, na_value=np.nan))

    dataset = Dataset(x, y, tuple(metas), name=name, labels=(majority, minority))
    logging.info(f"Loaded {name}: N={dataset.n_rows}, d={dataset.n_features}, IR={imbalance_ratio(dataset):.2f}")
    return dataset


def _split_names(text: str) -> list[str]:
    return [part.strip().strip("'\"") for part in text.split(",") if part.strip()]


def _directive_value(line: str) -> str:
    pieces = line.split(None, 1)
    return pieces[1].strip() if len(pieces) > 1 else ""


def load_keel(path, missing_token: str = KEEL_MISSING_TOKEN) -> Dataset:
    """
    Parse a KEEL .dat file (@relation / @attribute / @inputs / @outputs / @data).
        - real/integer attributes become numeric features, {a, b, ...} attributes become categorical.
        - the output attribute must carry exactly two class labels.
    """

    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()

    relation = path.stem
    attributes: list[tuple[str, str, tuple[str, ...]]] = []
    inputs: list[str] | None = None
    outputs: list[str] | None = None
    data_start = None

    for number, line in enumerate(lines):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue

        lowered = stripped.lower()
        if lowered.startswith("@relation"):
            relation = _directive_value(stripped) or relation
        elif lowered.startswith("@attribute"):
            match = _KEEL_ATTRIBUTE.match(stripped)
            if not match:
                raise ValueError(f"{path.name}:{number + 1}: malformed header line {stripped!r}")
            attr_name = match.group(1).strip("'\"")
            spec = match.group(2).strip()
            if spec.startswith("{"):
                if not spec.endswith("}"):
                    raise ValueError(f"{path.name}:{number + 1}: unterminated category list in {stripped!r}")
                attributes.append((attr_name, CATEGORICAL, tuple(_split_names(spec[1:-1]))))
            else:
                attributes.append((attr_name, NUMERIC, ()))
        elif lowered.startswith("@input"):
            inputs = _split_names(_directive_value(stripped))
        elif lowered.startswith("@output"):
            outputs = _split_names(_directive_value(stripped))
        elif lowered.startswith("@data"):
            data_start = number + 1
            break
        elif stripped.startswith("@"):
            raise ValueError(f"{path.name}:{number + 1}: unknown directive {stripped.split()[0]!r}")
        else:
            raise ValueError(f"{path.name}:{number + 1}: data before the @data directive")

    if data_start is None:
        raise ValueError(f"{path.name}: malformed header, no @data directive")
    if not attributes:
        raise ValueError(f"{path.name}: malformed header, no @attribute declarations")

    names = [a[0] for a in attributes]
    if len(set(names)) != len(names):
        raise ValueError(f"{path.name}: malformed header, duplicate attribute names")

    # KEEL files usually name the output explicitly, older ones rely on it being the last attribute
    if outputs is None:
        outputs = [names[-1]]
    if len(outputs) != 1 or outputs[0] not in names:
        raise ValueError(f"{path.name}: malformed header, expected exactly one known output attribute, got {outputs}")
    label = outputs[0]
    if inputs is None:
        inputs = [n for n in names if n != label]
    unknown = [n for n in inputs if n not in names]
    if unknown:
        raise ValueError(f"{path.name}: malformed header, unknown @inputs {unknown}")

    kinds = {a[0]: a for a in attributes}
    _, label_kind, label_categories = kinds[label]
    if label_kind == CATEGORICAL and len(label_categories) > 2:
        raise ValueError(f"{path.name}: output attribute {label!r} declares {len(label_categories)} classes, expected 2")

    body = [line for line in lines[data_start:] if line.strip() and not line.strip().startswith("%")]
    if not body:
        raise ValueError(f"{path.name}: empty dataset")

    rows = list(csv.reader(body, skipinitialspace=True, quotechar="'"))
    for offset, row in enumerate(rows):
        if len(row) != len(names):
            raise ValueError(f"{path.name}: malformed @data row {offset + 1}, expected {len(names)} values, got {len(row)}")
    frame = pd.DataFrame(rows, columns=names)

    metas = [FeatureMeta(n, kinds[n][1], kinds[n][2], missing_token) for n in inputs]
    return _build_dataset(frame, label, metas, relation, minority_label=None)


def load_csv(path, label_column: str, minority_label: str | None = None,
             missing_token: str = CSV_MISSING_TOKEN) -> Dataset:
    """
    Load a CSV with a header row. A column is numeric if every non-missing cell parses as a real number,
        otherwise it is categorical with its distinct values (sorted) as categories.
    """

    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]

    if label_column not in frame.columns:
        raise ValueError(f"{path.name}: label column {label_column!r} not found in {list(frame.columns)}")
    if frame.empty:
        raise ValueError(f"{path.name}: empty dataset")

    metas = []
    for column in frame.columns:
        if column == label_column:
            continue
        raw = frame[column].astype(str).str.strip()
        present = raw[raw != missing_token]
        parsed = pd.to_numeric(present, errors="coerce")
        if parsed.notna().all():
            metas.append(FeatureMeta(column, NUMERIC, (), missing_token))
        else:
            metas.append(FeatureMeta(column, CATEGORICAL, tuple(sorted(present.unique())), missing_token))

    return _build_dataset(frame, label_column, metas, path.stem, minority_label)


def partition(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """ (X_maj, X_min) in original row order. """

    return d.x[d.y == 0], d.x[d.y == 1]


def imbalance_ratio(d: Dataset) -> float:
    return d.n_majority / d.n_minority


def _allocate(n: int, fractions: tuple[float, ...], at_least_one: bool) -> list[int]:
    """ Largest-remainder allocation of n items over the fractions, optionally forcing >= 1 per part. """

    exact = [f * n for f in fractions]
    counts = [math.floor(e) for e in exact]
    remainder = n - sum(counts)
    # hand out leftovers by largest fractional part, earlier parts win ties
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1

    if at_least_one:
        if n < len(fractions):
            raise ValueError(f"Infeasible stratification: {n} rows cannot cover {len(fractions)} parts")
        while 0 in counts:
            empty = counts.index(0)
            donor = max(range(len(counts)), key=lambda i: (counts[i], -i))
            counts[donor] -= 1
            counts[empty] += 1
    return counts


def split(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """ Deterministic (train, val, test) split; stratified splits keep both classes in every part. """

    rng = np.random.default_rng(s.seed)
    parts: list[list[np.ndarray]] = [[], [], []]

    if s.stratified:
        for label in (0, 1):
            members = np.flatnonzero(d.y == label)
            shuffled = members[rng.permutation(members.size)]
            try:
                counts = _allocate(members.size, s.fractions, at_least_one=True)
            except ValueError as exc:
                raise ValueError(f"{d.name}: class {label} has {members.size} rows; {exc}") from exc
            bounds = np.cumsum([0] + counts)
            for i in range(3):
                parts[i].append(shuffled[bounds[i]:bounds[i + 1]])
    else:
        shuffled = rng.permutation(d.n_rows)
        counts = _allocate(d.n_rows, s.fractions, at_least_one=False)
        bounds = np.cumsum([0] + counts)
        for i in range(3):
            parts[i].append(shuffled[bounds[i]:bounds[i + 1]])
        for name, part in zip(("train", "val", "test"), parts):
            present = set(d.y[part[0]].tolist())
            for label, role in ((0, "majority"), (1, "minority")):
                if label not in present:
                    raise ValueError(f"{d.name}: infeasible split, the {name} part has no {role} rows "
                                     f"(seed {s.seed}, unstratified); use stratified=True")

    # keep original row order inside each part so loaders and splits compose predictably
    indices = [np.sort(np.concatenate(p)) for p in parts]
    train, val, test = (d.subset(idx) for idx in indices)
    logging.debug(f"Split {d.name}: train={train.n_rows}, val={val.n_rows}, test={test.n_rows}")
    return train, val, test
