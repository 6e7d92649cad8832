"""
Fit-and-apply feature preprocessing.

Numeric features go through: mode imputation (optional) -> Yeo-Johnson (only for power-law shaped features, optional)
-> z-score. Categorical features are one-hot encoded over the categories declared in the fitting data's metadata.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from ttgan.data import CATEGORICAL, NUMERIC, Dataset, FeatureMeta

# over 90% of the values inside less than 20% of the observed range
POWER_LAW_MASS = 0.9
POWER_LAW_WIDTH = 0.2

YEO_JOHNSON_BOUNDS = (-2.0, 2.0)
YEO_JOHNSON_XATOL = 1e-6


@dataclass(frozen=True)
class NumericParams:
    mean: float
    scale: float
    impute: float | None = None
    yeo_johnson_lambda: float | None = None
    constant: bool = False


@dataclass(frozen=True)
class CategoricalParams:
    # category label -> output column index, one contiguous block per feature
    columns: dict[str, int]
    impute: str | None = None


@dataclass(frozen=True)
class PreprocessPipeline:
    features: tuple[str, ...]
    kinds: tuple[str, ...]
    numeric: dict[str, NumericParams]
    categorical: dict[str, CategoricalParams]
    output_columns: tuple[str, ...]
    yeo_johnson: bool = False
    impute_mode: bool = True
    warnings: tuple[str, ...] = field(default=())

    @property
    def width(self) -> int:
        return len(self.output_columns)

    @property
    def constant_features(self) -> list[str]:
        return [name for name, p in self.numeric.items() if p.constant]

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "kinds": list(self.kinds),
            "numeric": {name: vars(p) for name, p in self.numeric.items()},
            "categorical": {name: {"columns": dict(p.columns), "impute": p.impute} for name, p in self.categorical.items()},
            "output_columns": list(self.output_columns),
            "yeo_johnson": self.yeo_johnson,
            "impute_mode": self.impute_mode,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PreprocessPipeline":
        return cls(
            features=tuple(raw["features"]),
            kinds=tuple(raw["kinds"]),
            numeric={name: NumericParams(**p) for name, p in raw["numeric"].items()},
            categorical={name: CategoricalParams({k: int(v) for k, v in p["columns"].items()}, p.get("impute"))
                         for name, p in raw["categorical"].items()},
            output_columns=tuple(raw["output_columns"]),
            yeo_johnson=bool(raw.get("yeo_johnson", False)),
            impute_mode=bool(raw.get("impute_mode", True)),
            warnings=tuple(raw.get("warnings", ())),
        )


def yeo_johnson(x, lmbda: float):
    """
    The four-branch Yeo-Johnson map. Works on scalars and arrays, lambda=1 returns the input untouched.
        - x >= 0: ((x+1)^l - 1)/l, or ln(x+1) when l == 0
        - x < 0: -((-x+1)^(2-l) - 1)/(2-l), or -ln(-x+1) when l == 2
    """

    if not math.isfinite(lmbda):
        raise ValueError(f"Yeo-Johnson lambda must be finite, got {lmbda}")
    if lmbda == 1:
        return x

    values = np.asarray(x, dtype=np.float64)
    out = np.empty_like(values)
    pos = values >= 0

    # expm1/log1p forms of the textbook branches, same values but stable near 0
    if abs(lmbda) < np.spacing(1.0):
        out[pos] = np.log1p(values[pos])
    else:
        out[pos] = np.expm1(lmbda * np.log1p(values[pos])) / lmbda

    if abs(lmbda - 2) < np.spacing(1.0):
        out[~pos] = -np.log1p(-values[~pos])
    else:
        out[~pos] = -np.expm1((2 - lmbda) * np.log1p(-values[~pos])) / (2 - lmbda)

    return float(out) if np.ndim(x) == 0 else out


def yeo_johnson_inverse(y, lmbda: float):
    if lmbda == 1:
        return y

    values = np.asarray(y, dtype=np.float64)
    out = np.empty_like(values)
    pos = values >= 0

    if abs(lmbda) < np.spacing(1.0):
        out[pos] = np.expm1(values[pos])
    else:
        out[pos] = np.expm1(np.log1p(lmbda * values[pos]) / lmbda)

    if abs(lmbda - 2) < np.spacing(1.0):
        out[~pos] = -np.expm1(-values[~pos])
    else:
        out[~pos] = -np.expm1(np.log1p((lmbda - 2) * values[~pos]) / (2 - lmbda))

    return float(out) if np.ndim(y) == 0 else out


def fit_yeo_johnson_lambda(values) -> float:
    """ Maximum-likelihood lambda over [-2, 2] (bounded scalar search on the profile log-likelihood). """

    values = np.asarray(values, dtype=np.float64)

    def negative_llf(lmbda):
        return -float(stats.yeojohnson_llf(lmbda, values))

    result = optimize.minimize_scalar(negative_llf, bounds=YEO_JOHNSON_BOUNDS, method="bounded",
                                      options={"xatol": YEO_JOHNSON_XATOL})
    return float(result.x)


def detect_power_law(values) -> bool:
    """ True iff some interval of width <= 0.2*(max-min) holds >= 90% of the values. Constant input is never power-law. """

    ordered = np.sort(np.asarray(values, dtype=np.float64))
    n = ordered.size
    if n == 0:
        return False

    span = ordered[-1] - ordered[0]
    if span <= 0:
        return False
    width = POWER_LAW_WIDTH * span

    # sorted sweep: for each left end, the right end is the last value <= left + width
    right = np.searchsorted(ordered, ordered + width, side="right")
    best = int((right - np.arange(n)).max())
    return best >= POWER_LAW_MASS * n


def _numeric_mode(values: np.ndarray) -> float | None:
    if values.size == 0:
        return None
    unique, counts = np.unique(values, return_counts=True)
    # np.unique sorts ascending and argmax takes the first max, so ties go to the smallest value
    return float(unique[np.argmax(counts)])


def _categorical_mode(labels: list[str]) -> str | None:
    if not labels:
        return None
    unique, counts = np.unique(np.asarray(labels, dtype=object).astype(str), return_counts=True)
    return str(unique[np.argmax(counts)])


def _labels_of(column: np.ndarray, feature: FeatureMeta) -> list[str | None]:
    return [None if np.isnan(v) else feature.categories[int(v)] for v in column]


def fit(train: Dataset, enable_yeo_johnson: bool = False, impute_mode: bool = True) -> PreprocessPipeline:
    """ Compute every statistic from ``train`` only. Constant numeric features are kept with scale 1 and a warning. """

    numeric: dict[str, NumericParams] = {}
    categorical: dict[str, CategoricalParams] = {}
    output_columns: list[str] = []
    warnings: list[str] = []

    for j, feature in enumerate(train.meta):
        column = train.x[:, j]

        if feature.kind == NUMERIC:
            present = column[~np.isnan(column)]
            impute = _numeric_mode(present) if impute_mode else None
            values = present if impute is None else np.where(np.isnan(column), impute, column)

            lmbda = None
            if enable_yeo_johnson and detect_power_law(values):
                lmbda = fit_yeo_johnson_lambda(values)
                values = yeo_johnson(values, lmbda)
                logging.info(f"Feature {feature.name!r} looks power-law, Yeo-Johnson lambda={lmbda:.4f}")

            mean = float(values.mean()) if values.size else 0.0
            scale = float(values.std()) if values.size else 0.0
            constant = not scale > 0 or not math.isfinite(scale)
            if constant:
                message = f"feature {feature.name!r} is constant on the training data, scale forced to 1"
                logging.warning(message)
                warnings.append(message)
                scale = 1.0

            numeric[feature.name] = NumericParams(mean, scale, impute, lmbda, constant)
            output_columns.append(feature.name)
        else:
            present = [label for label in _labels_of(column, feature) if label is not None]
            impute = _categorical_mode(present) if impute_mode else None
            offset = len(output_columns)
            columns = {label: offset + k for k, label in enumerate(feature.categories)}
            categorical[feature.name] = CategoricalParams(columns, impute)
            output_columns.extend(f"{feature.name}={label}" for label in feature.categories)

    return PreprocessPipeline(
        features=tuple(f.name for f in train.meta),
        kinds=tuple(f.kind for f in train.meta),
        numeric=numeric,
        categorical=categorical,
        output_columns=tuple(output_columns),
        yeo_johnson=enable_yeo_johnson,
        impute_mode=impute_mode,
        warnings=tuple(warnings),
    )


def _check_schema(p: PreprocessPipeline, d: Dataset) -> None:
    names = tuple(f.name for f in d.meta)
    kinds = tuple(f.kind for f in d.meta)
    if names != p.features or kinds != p.kinds:
        raise ValueError(f"Schema mismatch: pipeline expects {list(zip(p.features, p.kinds))}, "
                         f"dataset {d.name!r} has {list(zip(names, kinds))}")


def apply(p: PreprocessPipeline, d: Dataset) -> np.ndarray:
    """ Preprocessed matrix, columns in ``p.output_columns`` order. Unseen categories give an all-zero block. """

    _check_schema(p, d)
    out = np.zeros((d.n_rows, p.width), dtype=np.float64)

    column_index = 0
    for j, feature in enumerate(d.meta):
        column = d.x[:, j]

        if feature.kind == NUMERIC:
            params = p.numeric[feature.name]
            missing = np.isnan(column)
            values = np.where(missing, params.impute if params.impute is not None else 0.0, column)
            if params.yeo_johnson_lambda is not None:
                values = yeo_johnson(values, params.yeo_johnson_lambda)
            values = (values - params.mean) / params.scale
            if params.impute is None:
                # no imputation: a missing cell sits at the training mean
                values = np.where(missing, 0.0, values)
            out[:, column_index] = values
            column_index += 1
        else:
            params = p.categorical[feature.name]
            for row, label in enumerate(_labels_of(column, feature)):
                if label is None:
                    label = params.impute
                target = params.columns.get(label) if label is not None else None
                if target is not None:
                    out[row, target] = 1.0
            column_index += len(params.columns)

    return out


def transform_dataset(p: PreprocessPipeline, d: Dataset) -> Dataset:
    """ The same rows in the preprocessed, all-numeric space (labels and row_ids carried over). """

    x = apply(p, d)
    meta = tuple(FeatureMeta(name, NUMERIC, (), d.meta[0].missing_token if d.meta else "?") for name in p.output_columns)
    return Dataset(x, d.y, meta, name=d.name, labels=d.labels, row_ids=d.row_ids)


def inverse_transform(p: PreprocessPipeline, matrix: np.ndarray) -> np.ndarray:
    """ Map preprocessed rows back to raw feature space. Only defined when every feature is numeric. """

    if CATEGORICAL in p.kinds:
        raise ValueError("inverse_transform needs an all-numeric pipeline, one-hot blocks are not invertible")
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != p.width:
        raise ValueError(f"Expected a matrix with {p.width} columns, got shape {matrix.shape}")

    out = np.empty_like(matrix)
    for j, name in enumerate(p.features):
        params = p.numeric[name]
        values = matrix[:, j] * params.scale + params.mean
        if params.yeo_johnson_lambda is not None:
            values = yeo_johnson_inverse(values, params.yeo_johnson_lambda)
        out[:, j] = values
    return out


def save_pipeline(p: PreprocessPipeline, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(p.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_pipeline(path) -> PreprocessPipeline:
    return PreprocessPipeline.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
