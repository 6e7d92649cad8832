"""
Linear SVM used both as the baseline scorer f_b and as the final classifier f, and the end-to-end
oversampling procedure that ties the GAN, the selection step and the classifier together.

Objective minimised by fit_svm (t = +1 for minority, -1 for majority, c = per-sample weight):
    J(w, b) = sum_i c_i * max(0, 1 - t_i * (w.x_i + b)) + ||w||^2 / (2C)
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import expit

from ttgan.data import Dataset, partition
from ttgan.gan import EpochLosses, TtganConfig, generate, train
from ttgan.resample import AugmentedDataset, ScoredSamples, SelectionConfig, augment, select

CLASS_WEIGHTINGS = ("balanced", "none")


@dataclass(frozen=True)
class LinearSvmConfig:
    C: float = 1.0
    epochs: int = 100
    eta0: float = 0.1
    # iterate averaging starts after this fraction of all SGD steps
    averaging_start: float = 0.5
    class_weighting: str = "balanced"
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0 or not math.isfinite(self.C):
            raise ValueError(f"C must be a finite positive number, got {self.C}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if not 0.0 <= self.averaging_start < 1.0:
            raise ValueError(f"averaging_start must be in [0, 1), got {self.averaging_start}")
        if self.class_weighting not in CLASS_WEIGHTINGS:
            raise ValueError(f"Unknown class weighting {self.class_weighting!r}, expected one of {CLASS_WEIGHTINGS}")


@dataclass(frozen=True)
class LinearSvmModel:
    w: np.ndarray
    b: float
    calibration: str = "sigmoid_of_margin"
    config: LinearSvmConfig = field(default_factory=LinearSvmConfig)

    def to_dict(self) -> dict:
        return {"w": [float(v) for v in self.w], "b": float(self.b), "calibration": self.calibration,
                "config": asdict(self.config)}

    @classmethod
    def from_dict(cls, raw: dict) -> "LinearSvmModel":
        return cls(np.asarray(raw["w"], dtype=np.float64), float(raw["b"]), raw.get("calibration", "sigmoid_of_margin"),
                   LinearSvmConfig(**raw.get("config", {})))


class ClassifierHandle(Protocol):
    """ Anything run_oversampling can use as f_b / f: fit on a weighted matrix, then score rows into [0, 1]. """

    config: LinearSvmConfig

    def fit(self, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> "ClassifierHandle":
        ...

    def score(self, x: np.ndarray) -> np.ndarray:
        ...


def _check_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("Labels must be 0 or 1")
    if not (y == 0).any() or not (y == 1).any():
        raise ValueError("Classifier needs both classes in the training data (single-class input)")
    return y


def class_weights(y, weighting: str = "balanced") -> np.ndarray:
    """ balanced gives class c the per-sample weight N / (2 * N_c), so both classes carry N/2 in total. """

    y = _check_labels(y)
    if weighting == "none":
        return np.ones(y.size)
    if weighting != "balanced":
        raise ValueError(f"Unknown class weighting {weighting!r}")

    n = y.size
    counts = np.bincount(y, minlength=2)
    return np.where(y == 1, n / (2.0 * counts[1]), n / (2.0 * counts[0]))


def decision_function(m: LinearSvmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.w.size:
        raise ValueError(f"Input of shape {x.shape} does not match model width {m.w.size}")
    return x @ m.w + m.b


def score(m: LinearSvmModel, x: np.ndarray) -> np.ndarray:
    return expit(decision_function(m, x))


def hinge_objective(m: LinearSvmModel, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None,
                    C: float | None = None) -> float:
    y = _check_labels(y)
    C = m.config.C if C is None else C
    weights = class_weights(y, m.config.class_weighting) if weights is None else np.asarray(weights, dtype=np.float64)
    targets = 2.0 * y - 1.0
    hinge = np.maximum(0.0, 1.0 - targets * decision_function(m, x))
    return float((weights * hinge).sum() + (m.w @ m.w) / (2.0 * C))


def hinge_subgradient(m: LinearSvmModel, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None,
                      C: float | None = None) -> tuple[np.ndarray, float]:
    """ (dJ/dw, dJ/db) of hinge_objective, exact wherever no sample sits on its margin. """

    y = _check_labels(y)
    x = np.asarray(x, dtype=np.float64)
    C = m.config.C if C is None else C
    weights = class_weights(y, m.config.class_weighting) if weights is None else np.asarray(weights, dtype=np.float64)
    targets = 2.0 * y - 1.0
    # samples with margin exactly 1 contribute 0
    active = weights * targets * (targets * decision_function(m, x) < 1.0)
    return m.w / C - active @ x, float(-active.sum())


def fit_svm(x: np.ndarray, y: np.ndarray, cfg: LinearSvmConfig, weights: np.ndarray | None = None) -> LinearSvmModel:
    """
    Averaged stochastic subgradient descent on J / N, one seeded shuffle per epoch.
    With lam = 1/(C*N) the step size is eta_t = eta0 / (1 + eta0*lam*t), the bias is not regularized.
    """

    x = np.asarray(x, dtype=np.float64)
    y = _check_labels(y)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError(f"x of shape {x.shape} does not match {y.size} labels")
    weights = class_weights(y, cfg.class_weighting) if weights is None else np.asarray(weights, dtype=np.float64)

    rng = np.random.default_rng(cfg.seed)
    n, width = x.shape
    lam = 1.0 / (cfg.C * n)
    targets = 2.0 * y - 1.0

    w = np.zeros(width)
    b = 0.0
    w_avg = np.zeros(width)
    b_avg = 0.0
    n_avg = 0

    total_steps = cfg.epochs * n
    averaging_from = math.floor(cfg.averaging_start * total_steps)
    t = 0

    for _ in range(cfg.epochs):
        for i in rng.permutation(n):
            eta = cfg.eta0 / (1.0 + cfg.eta0 * lam * t)
            margin = targets[i] * (x[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * weights[i] * targets[i] * x[i]
                b += eta * weights[i] * targets[i]
            t += 1

            if t > averaging_from:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg

    if not np.isfinite(w_avg).all() or not math.isfinite(b_avg):
        raise ValueError("Linear SVM training produced non-finite parameters, check eta0 and the feature scale")
    model = LinearSvmModel(w_avg, b_avg, config=cfg)
    grad_w, grad_b = hinge_subgradient(model, x, y, weights)
    logging.debug(f"Linear SVM on {n} rows: J={hinge_objective(model, x, y, weights):.6g}, "
                  f"subgradient norm {math.hypot(float(np.linalg.norm(grad_w)), grad_b):.3g}")
    return model


class LinearSvmClassifier:
    def __init__(self, config: LinearSvmConfig | None = None):
        self.config = config or LinearSvmConfig()
        self.model: LinearSvmModel | None = None

    def fit(self, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> "LinearSvmClassifier":
        self.model = fit_svm(x, y, self.config, weights)
        return self

    def score(self, x: np.ndarray) -> np.ndarray:
        if self.model is None:
            raise ValueError("Classifier has not been fitted yet")
        return score(self.model, x)


@dataclass
class OversamplingDiagnostics:
    n_gen: int
    n_selected: int
    score_summary: dict[str, float]
    loss_history: list[EpochLosses] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"n_gen": self.n_gen, "n_selected": self.n_selected, "score_summary": dict(self.score_summary),
                "epochs_trained": len(self.loss_history)}


def summarize_scores(scores: np.ndarray) -> dict[str, float]:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return {}
    q1, median, q3 = np.quantile(scores, [0.25, 0.5, 0.75])
    return {"min": float(scores.min()), "q1": float(q1), "median": float(median), "q3": float(q3),
            "max": float(scores.max()), "mean": float(scores.mean())}


def run_oversampling(d: Dataset, ttgan_cfg: TtganConfig, sel_cfg: SelectionConfig, clf_cfg: LinearSvmConfig,
                    method: str | None = None) -> tuple[LinearSvmClassifier, AugmentedDataset, OversamplingDiagnostics]:
    """
    The full oversampling procedure on a preprocessed training set:
        1. fit the baseline classifier f_b on d
        2. train the GAN on (X_maj, X_min)
        3. X_gen = G(X_maj)
        4. score X_gen with f_b and select rows
        5. augment d with the selected rows
        6. fit f on the augmented data with the same classifier config as f_b
    """

    method = method or ttgan_cfg.mode

    baseline = LinearSvmClassifier(clf_cfg).fit(d.x, d.y)

    x_maj, x_min = partition(d)
    bundle = train(x_maj, x_min, ttgan_cfg)
    x_gen = generate(bundle, x_maj)

    scores = baseline.score(x_gen)
    picked = select(ScoredSamples(x_gen, scores), sel_cfg, d.n_minority)

    provenance = None
    if ttgan_cfg.mode == "ttgan":
        provenance = np.flatnonzero(d.y == 0)[picked]
    aug = augment(d, x_gen[picked], provenance, method=method)

    final = LinearSvmClassifier(clf_cfg).fit(aug.x, aug.y)
    assert type(final) is type(baseline) and final.config == baseline.config, "f and f_b must share model type and config"

    diagnostics = OversamplingDiagnostics(len(x_gen), len(picked), summarize_scores(scores), list(bundle.history))
    logging.info(f"{method} on {d.name}: generated {len(x_gen)}, selected {len(picked)} "
                 f"(p_max={sel_cfg.p_max}, s={sel_cfg.s}, {sel_cfg.variant})")
    return final, aug, diagnostics
