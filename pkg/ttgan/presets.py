# Tuned hyperparameters per benchmark dataset. The linear SVM rows can be run directly, the catboost rows are kept
# for reference only since no tree classifier ships with this package.

import dataclasses
from dataclasses import dataclass

from ttgan.gan import LossCoefficients, TtganConfig
from ttgan.resample import SelectionConfig

LINEAR_SVM = "linear_svm"
CATBOOST = "catboost"


@dataclass(frozen=True)
class Preset:
    name: str
    epochs: int
    lambda_t: float
    lambda_c: float
    lambda_i: float
    s: float
    p_max: float
    classifier: str = LINEAR_SVM
    # the catboost runs picked samples closest to p_max on either side instead of below it
    selection_variant: str = "upper_bound"

    @property
    def executable(self) -> bool:
        return self.classifier == LINEAR_SVM

    def ttgan_config(self, base: TtganConfig | None = None) -> TtganConfig:
        base = base or TtganConfig()
        return dataclasses.replace(base, epochs=self.epochs,
                                   coefficients=LossCoefficients(self.lambda_t, self.lambda_c, self.lambda_i))

    def selection_config(self) -> SelectionConfig:
        return SelectionConfig(p_max=self.p_max, s=self.s, variant=self.selection_variant)

    def apply(self, base: TtganConfig | None = None) -> tuple[TtganConfig, SelectionConfig]:
        if not self.executable:
            raise ValueError(f"Preset {self.name!r} was tuned for {self.classifier}, which is not available; "
                             f"only {LINEAR_SVM} presets can be run")
        return self.ttgan_config(base), self.selection_config()

    def to_dict(self) -> dict:
        return {**dataclasses.asdict(self), "executable": self.executable}


def _svm(name, epochs, lambda_t, lambda_c, lambda_i, s, p_max) -> Preset:
    return Preset(name, epochs, lambda_t, lambda_c, lambda_i, s, p_max)


def _catboost(name, epochs, lambda_t, lambda_c, lambda_i, s, p_max) -> Preset:
    return Preset(name, epochs, lambda_t, lambda_c, lambda_i, s, p_max, CATBOOST, "closest_to_pmax")


PRESETS: dict[str, Preset] = {p.name: p for p in (
    # KEEL datasets, linear SVM
    _svm("abalone9-18", 1150, 0.1, 0, 0, 4, 0.8),
    _svm("abalone19", 250, 0.05, 10, 5, 16, 0.9),
    _svm("glass-0-1-6_vs_2", 2500, 0.05, 15, 0, 5.5, 0.9),
    _svm("glass2", 2500, 0.1, 0, 2.5, 6.5, 0.8),
    _svm("glass4", 900, 0, 15, 7.5, 5.5, 0.8),
    _svm("page-blocks-1-3_vs_4", 900, 0.05, 5, 5, 5.5, 0.7),
    _svm("yeast-0-5-6-7-9_vs_4", 900, 0, 5, 2.5, 6.5, 0.8),
    _svm("yeast-1_vs_7", 2500, 0.05, 0, 0, 1.3, 0.8),
    _svm("yeast-1-2-8-9_vs_7", 1150, 0.05, 10, 5, 4, 1),
    _svm("yeast-1-4-5-8_vs_7", 900, 0.1, 15, 0, 1.65, 0.7),
    _svm("yeast-2_vs_4", 500, 0.1, 15, 0, 1.8, 0.6),
    _svm("yeast-2_vs_8", 1300, 0.05, 10, 10, 4, 0.6),
    _svm("yeast4", 1000, 0.05, 10, 0, 4, 1),
    _svm("yeast5", 1450, 0.05, 0, 0, 4, 0.6),
    _svm("yeast6", 2500, 0.15, 0, 5, 7.5, 0.6),
    # customer behaviour datasets, catboost
    _catboost("churn", 700, 0.2, 20, 12, 0.33, 0),
    _catboost("task1-return", 500, 0, 4, 6, 0.215, 0),
    _catboost("task1-pay", 700, 0.05, 16, 0, 0.24, 0.85),
    _catboost("task2-return", 700, 0.05, 10, 6, 0.25, 0.5),
    _catboost("task2-pay", 700, 0.25, 10, 3, 0.75, 0.5),
)}


def load_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"Unknown preset {name!r}. Available presets: {', '.join(sorted(PRESETS))}") from None


def list_presets(executable_only: bool = False) -> list[Preset]:
    return [p for p in PRESETS.values() if p.executable or not executable_only]
