"""
Experiment orchestration: load a dataset, split it, preprocess on the training part only, run every
(method, seed) pair, score the untouched test part and write the report files.

Outputs of a benchmark, all under the output dir:
    - report.json: config echo, one entry per run, per-method means and mean ranks (deterministic bytes)
    - timing.json: wall-clock numbers, kept apart so report.json stays reproducible
    - runs.tsv: one line per run with its metrics
    - loss_history_<method>_seed<seed>.tsv for the GAN based methods
"""

import asyncio
import dataclasses
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from scipy.stats import rankdata

from ttgan import preprocess
from ttgan.classify import (
    LinearSvmClassifier,
    LinearSvmConfig,
    OversamplingDiagnostics,
    run_oversampling,
)
from ttgan.data import NUMERIC, Dataset, FeatureMeta, SplitSpec, load_csv, load_keel, split
from ttgan.gan import LOSS_HISTORY_HEADER, LossCoefficients, TtganConfig
from ttgan.metrics import METRIC_NAMES, compute_metrics
from ttgan.presets import load_preset
from ttgan.resample import (
    BORDERLINE_M,
    SMOTE_K,
    AugmentedDataset,
    SelectionConfig,
    augment,
    borderline_smote,
    random_oversample,
    smote,
)
from ttgan.utils import get_output_dir, get_workers, write_json, write_tsv

METHODS = ("rw", "ros", "smote", "bsmote", "vanilla_gan", "ttgan", "ttgan_translation_only")
GAN_METHODS = ("vanilla_gan", "ttgan", "ttgan_translation_only")
DATASET_FORMATS = ("keel", "csv", "two_moons")

SCATTER_HEADER = ("x", "y", "class")


@dataclass(frozen=True)
class TwoMoonsSpec:
    n_majority: int = 250
    n_minority: int = 25
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_majority < 1 or self.n_minority < 1:
            raise ValueError(f"two-moons needs at least one row per class, got {self.n_majority}/{self.n_minority}")
        if not self.noise >= 0:
            raise ValueError(f"two-moons noise must be >= 0, got {self.noise}")


def make_two_moons(spec: TwoMoonsSpec) -> Dataset:
    """ Upper unit semicircle is the majority arc, the shifted lower arc is the minority one. """

    rng = np.random.default_rng(spec.seed)
    t_maj = np.linspace(0.0, np.pi, spec.n_majority)
    t_min = np.linspace(0.0, np.pi, spec.n_minority)

    majority = np.column_stack([np.cos(t_maj), np.sin(t_maj)])
    minority = np.column_stack([1.0 - np.cos(t_min), 1.0 - np.sin(t_min) - 0.5])
    x = np.vstack([majority, minority])
    if spec.noise > 0:
        x = x + rng.normal(scale=spec.noise, size=x.shape)

    y = np.r_[np.zeros(spec.n_majority, dtype=np.int64), np.ones(spec.n_minority, dtype=np.int64)]
    meta = (FeatureMeta("x1", NUMERIC), FeatureMeta("x2", NUMERIC))
    return Dataset(x, y, meta, name="two_moons", labels=("majority", "minority"))


def write_two_moons_csv(d: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(d.x, columns=[f.name for f in d.meta])
    frame["class"] = [d.labels[label] for label in d.y]
    frame.to_csv(path, index=False, float_format="%.17g")
    logging.info(f"Wrote {d.n_rows} two-moons rows to {path}")
    return path


@dataclass(frozen=True)
class DatasetSource:
    format: str = "two_moons"
    path: Path | None = None
    label_column: str | None = None
    minority_label: str | None = None
    missing_token: str | None = None
    two_moons: TwoMoonsSpec = field(default_factory=TwoMoonsSpec)

    def __post_init__(self):
        if self.format not in DATASET_FORMATS:
            raise ValueError(f"Unknown dataset format {self.format!r}, expected one of {DATASET_FORMATS}")
        if self.format != "two_moons" and self.path is None:
            raise ValueError(f"Dataset format {self.format!r} needs a path")
        if self.format == "csv" and not self.label_column:
            raise ValueError("CSV datasets need a label_column")


@dataclass(frozen=True)
class PreprocessConfig:
    yeo_johnson: bool = False
    impute_mode: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource = field(default_factory=DatasetSource)
    methods: tuple[str, ...] = ("rw", "ttgan")
    seeds: tuple[int, ...] = (0,)
    metrics: tuple[str, ...] = METRIC_NAMES
    recall_floor: float = 0.4
    output_dir: Path | None = None
    workers: int = 1
    preset: str | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    ttgan: TtganConfig = field(default_factory=TtganConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    svm: LinearSvmConfig = field(default_factory=LinearSvmConfig)
    smote_k: int = SMOTE_K
    bsmote_k: int = SMOTE_K
    bsmote_m: int = BORDERLINE_M
    grid: dict[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise ValueError("At least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"Unknown method(s) {unknown}, expected a subset of {METHODS}")
        if not self.seeds:
            raise ValueError("At least one seed is required")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        unknown = [m for m in self.metrics if m not in METRIC_NAMES]
        if unknown or not self.metrics:
            raise ValueError(f"Unknown metric(s) {unknown}, expected a non-empty subset of {METRIC_NAMES}")

    @property
    def primary_metric(self) -> str:
        return self.metrics[0]

    def with_preset(self, name: str | None = None) -> "ExperimentConfig":
        """ Overwrite epochs, loss coefficients, s and p_max with a tuned preset row. """

        name = name or self.preset
        if name is None:
            return self
        ttgan_cfg, selection = load_preset(name).apply(self.ttgan)
        return dataclasses.replace(self, preset=name, ttgan=ttgan_cfg, selection=selection)

    def to_dict(self) -> dict:
        raw = dataclasses.asdict(self)
        raw["dataset"]["path"] = None if self.dataset.path is None else str(self.dataset.path)
        raw["output_dir"] = None if self.output_dir is None else str(self.output_dir)
        raw["methods"] = list(self.methods)
        raw["seeds"] = list(self.seeds)
        raw["metrics"] = list(self.metrics)
        raw["grid"] = {key: list(values) for key, values in self.grid.items()}
        return raw


def _section(cls, raw, name: str):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ValueError(f"Config section {name!r} must be a mapping")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ValueError(f"Config section {name!r}: {exc}") from exc


def _ttgan_section(raw) -> TtganConfig:
    raw = dict(raw or {})
    coefficients = LossCoefficients(*(float(raw.pop(key, 0.0)) for key in ("lambda_t", "lambda_c", "lambda_i")))
    return _section(TtganConfig, {**raw, "coefficients": coefficients}, "ttgan")


def _split_section(raw) -> SplitSpec:
    raw = dict(raw or {})
    renamed = {"train": "train_fraction", "val": "val_fraction", "test": "test_fraction"}
    return _section(SplitSpec, {renamed.get(key, key): value for key, value in raw.items()}, "split")


CONFIG_KEYS = {"dataset", "methods", "seeds", "metrics", "recall_floor", "output_dir", "workers", "preset",
               "preprocess", "split", "ttgan", "selection", "svm", "smote", "bsmote", "grid"}


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """ Build an ExperimentConfig from the YAML mapping. Relative paths resolve against ``base_dir``. """

    raw = raw or {}
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"Unknown config key(s) {sorted(unknown)}, expected some of {sorted(CONFIG_KEYS)}")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    def resolve(value):
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else base_dir / path

    dataset_raw = dict(raw.get("dataset") or {})
    dataset_raw["path"] = resolve(dataset_raw.get("path"))
    dataset_raw["two_moons"] = _section(TwoMoonsSpec, dataset_raw.get("two_moons"), "dataset.two_moons")
    smote_raw = raw.get("smote") or {}
    bsmote_raw = raw.get("bsmote") or {}

    workers = raw.get("workers")
    cfg = ExperimentConfig(
        dataset=_section(DatasetSource, dataset_raw, "dataset"),
        methods=tuple(raw.get("methods", ExperimentConfig.methods)),
        seeds=tuple(int(s) for s in raw.get("seeds", ExperimentConfig.seeds)),
        metrics=tuple(raw.get("metrics", METRIC_NAMES)),
        recall_floor=float(raw.get("recall_floor", 0.4)),
        output_dir=resolve(raw.get("output_dir")) or get_output_dir(),
        workers=int(workers) if workers is not None else get_workers(),
        preset=raw.get("preset"),
        preprocess=_section(PreprocessConfig, raw.get("preprocess"), "preprocess"),
        split=_split_section(raw.get("split")),
        ttgan=_ttgan_section(raw.get("ttgan")),
        selection=_section(SelectionConfig, raw.get("selection"), "selection"),
        svm=_section(LinearSvmConfig, raw.get("svm"), "svm"),
        smote_k=int(smote_raw.get("k", SMOTE_K)),
        bsmote_k=int(bsmote_raw.get("k", SMOTE_K)),
        bsmote_m=int(bsmote_raw.get("m", BORDERLINE_M)),
        grid={str(key): tuple(values) for key, values in (raw.get("grid") or {}).items()},
    )
    return cfg.with_preset() if cfg.preset else cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, encoding="utf-8") as file:
        raw = yaml.safe_load(file)
    if raw is not None and not isinstance(raw, dict):
        raise ValueError(f"{path}: the config document must be a mapping")
    return config_from_dict(raw or {}, path.parent)


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """ Apply dotted keys such as ``ttgan.lambda_t`` or ``selection.p_max`` on top of cfg. """

    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if not name:
            if section not in {f.name for f in dataclasses.fields(cfg)} or section in ("dataset", "grid"):
                raise ValueError(f"Cannot override config key {key!r}")
            cfg = dataclasses.replace(cfg, **{section: value})
        elif section == "ttgan" and name in ("lambda_t", "lambda_c", "lambda_i"):
            coefficients = dataclasses.replace(cfg.ttgan.coefficients, **{name: float(value)})
            cfg = dataclasses.replace(cfg, ttgan=dataclasses.replace(cfg.ttgan, coefficients=coefficients))
        elif section in ("ttgan", "selection", "svm", "preprocess", "split"):
            current = getattr(cfg, section)
            if name not in {f.name for f in dataclasses.fields(current)}:
                raise ValueError(f"Unknown config key {key!r}")
            cfg = dataclasses.replace(cfg, **{section: dataclasses.replace(current, **{name: value})})
        else:
            raise ValueError(f"Unknown config key {key!r}")
    return cfg


def load_dataset(source: DatasetSource) -> Dataset:
    if source.format == "keel":
        return load_keel(source.path, source.missing_token or "?")
    if source.format == "csv":
        return load_csv(source.path, source.label_column, source.minority_label, source.missing_token or "")
    return make_two_moons(source.two_moons)


@dataclass(frozen=True, eq=False)
class PreparedSplit:
    """ Raw splits plus their preprocessed versions, statistics fitted on ``train`` only. """

    train: Dataset
    val: Dataset
    test: Dataset
    pipeline: preprocess.PreprocessPipeline
    train_pp: Dataset
    val_pp: Dataset
    test_pp: Dataset


def prepare(cfg: ExperimentConfig, dataset: Dataset, seed: int) -> PreparedSplit:
    train, val, test = split(dataset, dataclasses.replace(cfg.split, seed=seed))
    pipeline = preprocess.fit(train, cfg.preprocess.yeo_johnson, cfg.preprocess.impute_mode)
    return PreparedSplit(train, val, test, pipeline, *(preprocess.transform_dataset(pipeline, d) for d in (train, val, test)))


@dataclass
class MethodOutcome:
    classifier: LinearSvmClassifier
    augmented: AugmentedDataset
    diagnostics: OversamplingDiagnostics | None = None


def resample_and_fit(cfg: ExperimentConfig, train_pp: Dataset, method: str, seed: int) -> MethodOutcome:
    """ Oversample the preprocessed training set with ``method`` and fit the linear SVM on the result. """

    svm_cfg = dataclasses.replace(cfg.svm, seed=seed)

    if method in GAN_METHODS:
        ttgan_cfg = dataclasses.replace(cfg.ttgan, seed=seed, mode="vanilla" if method == "vanilla_gan" else "ttgan")
        if method == "ttgan_translation_only":
            coefficients = LossCoefficients(ttgan_cfg.coefficients.lambda_t, 0.0, 0.0)
            ttgan_cfg = dataclasses.replace(ttgan_cfg, coefficients=coefficients)
        classifier, aug, diagnostics = run_oversampling(train_pp, ttgan_cfg, cfg.selection, svm_cfg, method=method)
        return MethodOutcome(classifier, aug, diagnostics)

    if method == "rw":
        aug = augment(train_pp, np.zeros((0, train_pp.n_features)), method="rw")
    elif method == "ros":
        aug = random_oversample(train_pp, seed)
    elif method == "smote":
        aug = smote(train_pp, cfg.smote_k, seed)
    elif method == "bsmote":
        aug = borderline_smote(train_pp, cfg.bsmote_k, cfg.bsmote_m, seed)
    else:
        raise ValueError(f"Unknown method {method!r}, expected one of {METHODS}")

    classifier = LinearSvmClassifier(svm_cfg).fit(aug.x, aug.y)
    return MethodOutcome(classifier, aug)


def check_hygiene(prepared: PreparedSplit, aug: AugmentedDataset) -> None:
    """ Every row the resampler touched must come from the training split. """

    test_ids = set(prepared.test_pp.row_ids.tolist())
    if aug.base is not prepared.train_pp:
        raise RuntimeError("Resampling ran on something other than the preprocessed training split")
    if aug.provenance is not None:
        sources = set(aug.base.row_ids[aug.provenance].tolist())
        if sources & test_ids:
            raise RuntimeError(f"Synthetic rows derive from test rows {sorted(sources & test_ids)[:5]}")
    if set(prepared.train_pp.row_ids.tolist()) & test_ids:
        raise RuntimeError("Training and test splits share rows")


@dataclass
class RunResult:
    method: str
    seed: int
    metrics: dict[str, float] = field(default_factory=dict)
    n_train: int = 0
    n_eval: int = 0
    n_added: int = 0
    diagnostics: dict | None = None
    notes: tuple[str, ...] = ()
    error: str | None = None
    seconds: float = 0.0
    loss_history: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {"method": self.method, "seed": self.seed, "metrics": dict(self.metrics), "n_train": self.n_train,
                "n_eval": self.n_eval, "n_added": self.n_added, "diagnostics": self.diagnostics,
                "notes": list(self.notes), "error": self.error}


def run_single(cfg: ExperimentConfig, dataset: Dataset, method: str, seed: int, evaluate_on: str = "test") -> RunResult:
    started = time.perf_counter()
    prepared = prepare(cfg, dataset, seed)
    outcome = resample_and_fit(cfg, prepared.train_pp, method, seed)
    check_hygiene(prepared, outcome.augmented)

    target = prepared.test_pp if evaluate_on == "test" else prepared.val_pp
    scores = outcome.classifier.score(target.x)
    metrics = compute_metrics(scores, target.y, cfg.metrics, cfg.recall_floor)

    result = RunResult(
        method=method,
        seed=seed,
        metrics=metrics,
        n_train=prepared.train_pp.n_rows,
        n_eval=target.n_rows,
        n_added=outcome.augmented.n_added,
        diagnostics=outcome.diagnostics.to_dict() if outcome.diagnostics else None,
        notes=outcome.augmented.notes,
        seconds=time.perf_counter() - started,
        loss_history=outcome.diagnostics.loss_history if outcome.diagnostics else [],
    )
    logging.info(f"{method} seed={seed} on {dataset.name}: " + ", ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    return result


def _run_guarded(cfg: ExperimentConfig, dataset: Dataset, method: str, seed: int, evaluate_on: str) -> RunResult:
    try:
        return run_single(cfg, dataset, method, seed, evaluate_on)
    except Exception as e:
        # one failing run must not take the other (method, seed) pairs down with it
        logging.exception(f"Run {method} seed={seed} failed: {e}")
        return RunResult(method, seed, error=f"{type(e).__name__}: {e}")


async def _run_all(cfg: ExperimentConfig, dataset: Dataset, jobs: list[tuple[ExperimentConfig, str, int]],
                   evaluate_on: str) -> list[RunResult]:
    semaphore = asyncio.Semaphore(cfg.workers)

    async def guarded(job_cfg, method, seed):
        async with semaphore:
            return await asyncio.to_thread(_run_guarded, job_cfg, dataset, method, seed, evaluate_on)

    # gather keeps job order, so the report does not depend on which run finishes first
    return await asyncio.gather(*(guarded(*job) for job in jobs))


def run_jobs(cfg: ExperimentConfig, dataset: Dataset, jobs, evaluate_on: str = "test") -> list[RunResult]:
    return asyncio.run(_run_all(cfg, dataset, list(jobs), evaluate_on))


def rank_methods(values: dict[str, float], higher_is_better: bool = True) -> dict[str, float]:
    """ Rank 1 is best, tied values share the average of their ranks. """

    names = list(values)
    if not names:
        return {}
    scores = np.asarray([values[n] for n in names], dtype=np.float64)
    ranks = rankdata(-scores if higher_is_better else scores, method="average")
    return {name: float(rank) for name, rank in zip(names, ranks)}


@dataclass
class RunReport:
    config: dict
    runs: list[RunResult]
    summary: dict[str, dict]
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config, "runs": [r.to_dict() for r in self.runs], "summary": self.summary}


def summarize(cfg: ExperimentConfig, runs: list[RunResult]) -> dict[str, dict]:
    summary: dict[str, dict] = {}
    for method in cfg.methods:
        done = [r for r in runs if r.method == method and r.ok]
        entry = {"n_runs": len(done), "n_failed": sum(1 for r in runs if r.method == method and not r.ok)}
        for name in cfg.metrics:
            entry[name] = float(np.mean([r.metrics[name] for r in done])) if done else None
        summary[method] = entry

    # ranks per seed on the primary metric, then averaged per method
    per_method_ranks: dict[str, list[float]] = {m: [] for m in cfg.methods}
    for seed in cfg.seeds:
        values = {r.method: r.metrics[cfg.primary_metric] for r in runs if r.seed == seed and r.ok}
        for method, rank in rank_methods(values).items():
            per_method_ranks[method].append(rank)
    for method, ranks in per_method_ranks.items():
        summary[method]["mean_rank"] = float(np.mean(ranks)) if ranks else None
    return summary


def write_outputs(report: RunReport, cfg: ExperimentConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    write_json(out_dir / "report.json", report.to_dict())
    write_json(out_dir / "timing.json", report.timing)

    header = ["method", "seed", *cfg.metrics, "n_added", "error"]
    rows = ([r.method, r.seed, *(r.metrics.get(m) for m in cfg.metrics), r.n_added, r.error] for r in report.runs)
    write_tsv(out_dir / "runs.tsv", header, rows)

    for r in report.runs:
        if r.loss_history:
            write_tsv(out_dir / f"loss_history_{r.method}_seed{r.seed}.tsv", LOSS_HISTORY_HEADER,
                      (record.as_row() for record in r.loss_history))
    return out_dir


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None, write: bool = True) -> RunReport:
    started = time.perf_counter()
    dataset = dataset if dataset is not None else load_dataset(cfg.dataset)
    logging.info(f"Benchmark on {dataset.name}: methods={list(cfg.methods)}, seeds={list(cfg.seeds)}, "
                 f"workers={cfg.workers}" + (f", preset={cfg.preset}" if cfg.preset else ""))

    runs = run_jobs(cfg, dataset, ((cfg, m, s) for m in cfg.methods for s in cfg.seeds))
    report = RunReport(cfg.to_dict(), runs, summarize(cfg, runs))
    report.timing = {
        "wall_clock_seconds": time.perf_counter() - started,
        "runs": {f"{r.method}/seed{r.seed}": r.seconds for r in runs},
    }

    failed = [r for r in runs if not r.ok]
    if failed:
        logging.warning(f"{len(failed)} of {len(runs)} runs failed, see the error fields in the report")
    if write:
        write_outputs(report, cfg, cfg.output_dir or get_output_dir())
    return report


def grid_search(cfg: ExperimentConfig, dataset: Dataset | None = None) -> list[dict]:
    """
    Every combination of ``cfg.grid`` (dotted key -> values) for every configured method, scored on the
    validation split with the first seed. Best first by the primary metric, failed combinations last.
    """

    if not cfg.grid:
        raise ValueError("grid_search needs a non-empty 'grid' section")
    dataset = dataset if dataset is not None else load_dataset(cfg.dataset)
    seed = cfg.seeds[0]

    keys = sorted(cfg.grid)
    combos = [dict(zip(keys, values)) for values in itertools.product(*(cfg.grid[k] for k in keys))]
    jobs, params = [], []
    for combo in combos:
        job_cfg = with_overrides(cfg, combo)
        for method in cfg.methods:
            jobs.append((job_cfg, method, seed))
            params.append(combo)

    logging.info(f"Grid search: {len(combos)} combination(s) x {len(cfg.methods)} method(s) on the validation split")
    results = run_jobs(cfg, dataset, jobs, evaluate_on="val")

    entries = [{"method": r.method, "params": combo, "metrics": r.metrics, "error": r.error}
               for r, combo in zip(results, params)]

    def key(entry):
        value = entry["metrics"].get(cfg.primary_metric)
        return (value is None, -(value if value is not None else -math.inf))

    return sorted(entries, key=key)


def emit_scatter(d: Dataset | AugmentedDataset, path, pipeline: preprocess.PreprocessPipeline | None = None) -> Path:
    """
    x, y, class rows for 2-D data, class is majority, minority or generated.
    With an all-numeric pipeline the points are mapped back to the raw feature space first.
    """

    base = d.base if isinstance(d, AugmentedDataset) else d
    synthetic = d.x_selected if isinstance(d, AugmentedDataset) else np.zeros((0, base.n_features))
    if base.n_features != 2:
        raise ValueError(f"Scatter output needs exactly 2 features, {base.name!r} has {base.n_features}")

    points = np.vstack([base.x, synthetic])
    if pipeline is not None:
        points = preprocess.inverse_transform(pipeline, points)
    classes = [("majority", "minority")[label] for label in base.y] + ["generated"] * synthetic.shape[0]
    return write_tsv(path, SCATTER_HEADER, ((float(p[0]), float(p[1]), c) for p, c in zip(points, classes)))
