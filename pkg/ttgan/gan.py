"""
Tabular translation GAN.

G maps majority rows to minority-looking rows and is judged by D, while the reverse pair G' / D' maps minority rows
back to the majority side. G is trained on its adversarial loss plus three regularizers:
    - translation: mean ||z - G(z)||_1 over the majority batch, keeps G(z) near its source row
    - cycle: G(G'(x_min)) ~ x_min and G'(G(x_maj)) ~ x_maj
    - identity: G(x_min) ~ x_min and G'(x_maj) ~ x_maj

In "vanilla" mode the reverse pair is dropped and G is fed standard normal noise instead of majority rows.
Every expectation is a batch mean.

The recorded L_G is always mean log(1 - D(G(z))). What the generators descend depends on ``generator_loss``:
"minimax" descends L_G itself, "non_saturating" descends -mean log D(G(z)) instead, which has the same optimum
but does not go flat while D still rejects the generated rows.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ttgan.numerics import (
    AdamState,
    DivergenceError,
    Grad,
    Mlp,
    adam_step,
    backward,
    forward,
    forward_cached,
    ForwardCache,
    make_discriminator,
    make_generator,
    mlp_arrays,
    mlp_from_arrays,
)
from ttgan.utils import write_tsv

PROB_FLOOR = 1e-12

MODES = ("ttgan", "vanilla")
GENERATOR_LOSSES = ("non_saturating", "minimax")

LOSS_HISTORY_HEADER = ("epoch", "L_D", "L_G", "L_T", "L_C", "L_I", "L_D'", "L_G'", "objective")


@dataclass(frozen=True)
class LossCoefficients:
    lambda_t: float = 0.0
    lambda_c: float = 0.0
    lambda_i: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"Loss coefficient {name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class TtganConfig:
    epochs: int = 1000
    batch_size: int = 64
    learning_rate: float = 1e-4
    coefficients: LossCoefficients = field(default_factory=LossCoefficients)
    seed: int = 0
    mode: str = "ttgan"
    generator_loss: str = "non_saturating"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.mode not in MODES:
            raise ValueError(f"Unknown GAN mode {self.mode!r}, expected one of {MODES}")
        if self.generator_loss not in GENERATOR_LOSSES:
            raise ValueError(f"Unknown generator loss {self.generator_loss!r}, expected one of {GENERATOR_LOSSES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TtganConfig":
        raw = dict(raw)
        raw["coefficients"] = LossCoefficients(**raw.get("coefficients", {}))
        return cls(**raw)


@dataclass(frozen=True)
class LatentPrior:
    dim: int
    kind: str = "standard_normal"

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))


@dataclass
class EpochLosses:
    epoch: int
    d_loss: float
    g_loss: float
    translation: float | None = None
    cycle: float | None = None
    identity: float | None = None
    d_rev_loss: float | None = None
    g_rev_loss: float | None = None
    generator_objective: float = 0.0

    def as_row(self) -> tuple:
        return (self.epoch, self.d_loss, self.g_loss, self.translation, self.cycle, self.identity,
                self.d_rev_loss, self.g_rev_loss, self.generator_objective)


@dataclass
class TtganBundle:
    config: TtganConfig
    width: int
    generator: Mlp
    discriminator: Mlp
    reverse_generator: Mlp | None = None
    reverse_discriminator: Mlp | None = None
    optimizers: dict[str, AdamState] = field(default_factory=dict)
    history: list[EpochLosses] = field(default_factory=list)
    prior: LatentPrior | None = None

    @property
    def mode(self) -> str:
        return self.config.mode


@dataclass
class GeneratorTerms:
    g_loss: float
    g_rev_loss: float | None = None
    translation: float | None = None
    cycle: float | None = None
    identity: float | None = None
    # the adversarial values the generators actually descend, equal to g_loss / g_rev_loss under "minimax"
    adversarial: float | None = None
    adversarial_rev: float | None = None

    def objective(self, coefficients: LossCoefficients) -> float:
        """ L_G + L_G' + lT*L_T + lC*L_C + lI*L_I, the quantity recorded in the loss history. """
        return self._weighted(self.g_loss, self.g_rev_loss, coefficients)

    def descent_objective(self, coefficients: LossCoefficients) -> float:
        """ Same sum with the descended adversarial terms, generator_gradients is the gradient of this. """
        adversarial = self.g_loss if self.adversarial is None else self.adversarial
        adversarial_rev = self.g_rev_loss if self.adversarial_rev is None else self.adversarial_rev
        return self._weighted(adversarial, adversarial_rev, coefficients)

    def _weighted(self, adversarial: float, adversarial_rev: float | None, coefficients: LossCoefficients) -> float:
        if self.g_rev_loss is None:
            return adversarial
        return (adversarial + adversarial_rev + coefficients.lambda_t * self.translation
                + coefficients.lambda_c * self.cycle + coefficients.lambda_i * self.identity)


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR))


def _inside_clamp(p: np.ndarray) -> np.ndarray:
    # the clamp is flat outside (floor, 1-floor), so no gradient flows there
    return ((p > PROB_FLOOR) & (p < 1.0 - PROB_FLOOR)).astype(np.float64)


def _l1_rows(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).sum(axis=1).mean())


def gan_losses(d_real, d_fake) -> tuple[float, float]:
    """ (L_D, L_G) with L_D = mean log D(real) + mean log(1 - D(fake)) and L_G = mean log(1 - D(fake)). """

    g_loss = _generator_loss(d_fake)
    d_loss = float(_clamped_log(np.asarray(d_real, dtype=np.float64)).mean()) + g_loss
    return d_loss, g_loss


def _generator_loss(d_fake) -> float:
    return float(_clamped_log(1.0 - np.asarray(d_fake, dtype=np.float64)).mean())


def _adversarial_value(p_fake: np.ndarray, generator_loss: str) -> float:
    if generator_loss == "minimax":
        return _generator_loss(p_fake)
    return float(-_clamped_log(p_fake).mean())


def _adversarial_upstream(p_fake: np.ndarray, generator_loss: str) -> np.ndarray:
    """ d/dp of the descended adversarial value: mean log(1 - p) or -mean log p. """

    if generator_loss == "minimax":
        return -_inside_clamp(p_fake) / np.clip(1.0 - p_fake, PROB_FLOOR, None) / p_fake.shape[0]
    return -_inside_clamp(p_fake) / np.clip(p_fake, PROB_FLOOR, None) / p_fake.shape[0]


def translation_loss(z: np.ndarray, gz: np.ndarray) -> float:
    z = np.asarray(z, dtype=np.float64)
    gz = np.asarray(gz, dtype=np.float64)
    if z.shape != gz.shape:
        raise ValueError(f"translation_loss needs equal shapes, got {z.shape} and {gz.shape}")
    return _l1_rows(z, gz)


def cycle_loss(x_min: np.ndarray, x_maj: np.ndarray, g: Mlp, g_rev: Mlp) -> float:
    return _l1_rows(forward(g, forward(g_rev, x_min)), x_min) + _l1_rows(forward(g_rev, forward(g, x_maj)), x_maj)


def identity_loss(x_min: np.ndarray, x_maj: np.ndarray, g: Mlp, g_rev: Mlp) -> float:
    return _l1_rows(forward(g, x_min), x_min) + _l1_rows(forward(g_rev, x_maj), x_maj)


def discriminator_gradients(d: Mlp, real: np.ndarray, fake: np.ndarray) -> tuple[Grad, float]:
    """ Gradient of -L_D (what the discriminator descends) together with L_D itself. """

    n_real = real.shape[0]
    # one pass over the stacked batch, the parameter gradient is a sum over rows either way
    p, cache = forward_cached(d, np.vstack([real, fake]))
    p_real, p_fake = p[:n_real], p[n_real:]
    d_loss, _ = gan_losses(p_real, p_fake)

    upstream = np.vstack([
        -_inside_clamp(p_real) / np.clip(p_real, PROB_FLOOR, None) / n_real,
        _inside_clamp(p_fake) / np.clip(1.0 - p_fake, PROB_FLOOR, None) / p_fake.shape[0],
    ])
    grad, _ = backward(d, cache.activations[0], upstream, cache)
    return grad, d_loss


def generator_terms(g: Mlp, d: Mlp, g_rev: Mlp | None, d_rev: Mlp | None, z: np.ndarray,
                    x_min: np.ndarray | None = None, generator_loss: str = "non_saturating") -> GeneratorTerms:
    """ Forward-only evaluation of every generator-side loss, the reference the analytic gradients are checked against. """

    gz = forward(g, z)
    p_fake = forward(d, gz)
    g_loss = _generator_loss(p_fake)
    adversarial = _adversarial_value(p_fake, generator_loss)
    if g_rev is None:
        return GeneratorTerms(g_loss, adversarial=adversarial)

    p_rev = forward(d_rev, forward(g_rev, x_min))
    return GeneratorTerms(
        g_loss=g_loss,
        g_rev_loss=_generator_loss(p_rev),
        translation=translation_loss(z, gz),
        cycle=cycle_loss(x_min, z, g, g_rev),
        identity=identity_loss(x_min, z, g, g_rev),
        adversarial=adversarial,
        adversarial_rev=_adversarial_value(p_rev, generator_loss),
    )


def generator_gradients(g: Mlp, d: Mlp, g_rev: Mlp | None, d_rev: Mlp | None, z: np.ndarray,
                        x_min: np.ndarray | None, coefficients: LossCoefficients,
                        generator_loss: str = "non_saturating", gz_cache: ForwardCache | None = None,
                        rx_cache: ForwardCache | None = None) -> tuple[Grad, Grad | None, GeneratorTerms]:
    """
    Analytic gradients of the joint generator objective (GeneratorTerms.descent_objective) with respect to G and G'.

    G only sees its own terms (adversarial, translation, both cycle paths through G, identity on x_min) and G' only
    sees its own, so one joint gradient is the same as two separate per-generator gradients.
    ``gz_cache`` / ``rx_cache`` are forward_cached results for G(z) and G'(x_min) when the caller already has them.
    Returns (grad_G, grad_G' or None in vanilla mode, loss terms).
    """

    n_maj = z.shape[0]
    cache_gz = gz_cache if gz_cache is not None else forward_cached(g, z)[1]
    gz = cache_gz.output
    p_fake, cache_d = forward_cached(d, gz)
    g_loss = _generator_loss(p_fake)
    adversarial = _adversarial_value(p_fake, generator_loss)

    # adversarial path, D's parameter gradient is discarded
    _, upstream_gz = backward(d, gz, _adversarial_upstream(p_fake, generator_loss), cache_d)

    if g_rev is None:
        grad_g, _ = backward(g, z, upstream_gz, cache_gz)
        return grad_g, None, GeneratorTerms(g_loss, adversarial=adversarial)

    n_min = x_min.shape[0]
    lam = coefficients
    grad_g = Grad.zeros_like(g)
    grad_rev = Grad.zeros_like(g_rev)

    upstream_gz = upstream_gz + lam.lambda_t * np.sign(gz - z) / n_maj
    translation = translation_loss(z, gz)

    # reverse adversarial path through D'
    cache_rx = rx_cache if rx_cache is not None else forward_cached(g_rev, x_min)[1]
    rx = cache_rx.output
    p_rev, cache_drev = forward_cached(d_rev, rx)
    g_rev_loss = _generator_loss(p_rev)
    adversarial_rev = _adversarial_value(p_rev, generator_loss)
    _, upstream_rx = backward(d_rev, rx, _adversarial_upstream(p_rev, generator_loss), cache_drev)

    # cycle x_maj -> G -> G' -> x_maj
    cyc_maj, cache_cyc_maj = forward_cached(g_rev, gz)
    # cycle x_min -> G' -> G -> x_min
    cyc_min, cache_cyc_min = forward_cached(g, rx)
    cycle = _l1_rows(cyc_maj, z) + _l1_rows(cyc_min, x_min)
    if lam.lambda_c > 0:
        grad, upstream = backward(g_rev, gz, lam.lambda_c * np.sign(cyc_maj - z) / n_maj, cache_cyc_maj)
        grad_rev.add(grad)
        upstream_gz = upstream_gz + upstream
        grad, upstream = backward(g, rx, lam.lambda_c * np.sign(cyc_min - x_min) / n_min, cache_cyc_min)
        grad_g.add(grad)
        upstream_rx = upstream_rx + upstream

    id_min, cache_id_min = forward_cached(g, x_min)
    id_maj, cache_id_maj = forward_cached(g_rev, z)
    identity = _l1_rows(id_min, x_min) + _l1_rows(id_maj, z)
    if lam.lambda_i > 0:
        grad_g.add(backward(g, x_min, lam.lambda_i * np.sign(id_min - x_min) / n_min, cache_id_min)[0])
        grad_rev.add(backward(g_rev, z, lam.lambda_i * np.sign(id_maj - z) / n_maj, cache_id_maj)[0])

    grad_g.add(backward(g, z, upstream_gz, cache_gz)[0])
    grad_rev.add(backward(g_rev, x_min, upstream_rx, cache_rx)[0])

    terms = GeneratorTerms(g_loss, g_rev_loss, translation, cycle, identity, adversarial, adversarial_rev)
    return grad_g, grad_rev, terms


def _rngs(seed: int) -> dict[str, np.random.Generator]:
    init, batches, prior, generation = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init),
        "batches": np.random.default_rng(batches),
        "prior": np.random.default_rng(prior),
        "generation": np.random.default_rng(generation),
    }


def init_bundle(width: int, cfg: TtganConfig) -> TtganBundle:
    """ Seeded construction of every network, G and D come out identical in both modes for the same seed. """

    if width < 1:
        raise ValueError(f"Feature width must be >= 1, got {width}")

    init_rng = _rngs(cfg.seed)["init"]
    generator = make_generator(width, width, init_rng)
    discriminator = make_discriminator(width, init_rng)
    bundle = TtganBundle(cfg, width, generator, discriminator)

    if cfg.mode == "ttgan":
        bundle.reverse_generator = make_generator(width, width, init_rng)
        bundle.reverse_discriminator = make_discriminator(width, init_rng)
    else:
        bundle.prior = LatentPrior(width)

    for name, net in _networks(bundle).items():
        bundle.optimizers[name] = AdamState.for_mlp(net, learning_rate=cfg.learning_rate)
    return bundle


def _networks(b: TtganBundle) -> dict[str, Mlp]:
    nets = {"G": b.generator, "D": b.discriminator}
    if b.reverse_generator is not None:
        nets["G'"] = b.reverse_generator
        nets["D'"] = b.reverse_discriminator
    return nets


def _check_finite(value: float | None, term: str, epoch: int) -> None:
    if value is not None and not math.isfinite(value):
        raise DivergenceError(f"Loss term {term} became non-finite ({value}) at epoch {epoch}")


def _step(b: TtganBundle, name: str, grad: Grad, epoch: int) -> None:
    try:
        adam_step(_networks(b)[name], grad, b.optimizers[name])
    except DivergenceError as exc:
        raise DivergenceError(f"{name} update diverged at epoch {epoch}: {exc}") from exc


def train(x_maj: np.ndarray, x_min: np.ndarray, cfg: TtganConfig) -> TtganBundle:
    """
    Per minibatch: one D step (and one D' step), then one joint G/G' step. An epoch is one pass over X_maj,
    the last short batch is kept. Minority batches match the majority batch size, drawn with replacement
    only when the minority set is smaller than the batch.
    """

    x_maj = np.asarray(x_maj, dtype=np.float64)
    x_min = np.asarray(x_min, dtype=np.float64)
    if x_maj.ndim != 2 or x_min.ndim != 2 or x_maj.shape[0] == 0 or x_min.shape[0] == 0:
        raise ValueError("train needs nonempty 2-d majority and minority matrices")
    if x_maj.shape[1] != x_min.shape[1]:
        raise ValueError(f"Majority width {x_maj.shape[1]} differs from minority width {x_min.shape[1]}")

    bundle = init_bundle(x_maj.shape[1], cfg)
    rngs = _rngs(cfg.seed)
    vanilla = cfg.mode == "vanilla"
    n_maj, n_min = x_maj.shape[0], x_min.shape[0]

    logging.info(f"Training {cfg.mode} GAN: {n_maj} majority / {n_min} minority rows, width {bundle.width}, "
                 f"{cfg.epochs} epochs, batch {cfg.batch_size}")

    for epoch in range(1, cfg.epochs + 1):
        order = rngs["batches"].permutation(n_maj)
        sums: dict[str, float] = {}
        n_batches = 0

        for start in range(0, n_maj, cfg.batch_size):
            maj_batch = x_maj[order[start:start + cfg.batch_size]]
            size = maj_batch.shape[0]
            pick = rngs["batches"].choice(n_min, size=size, replace=n_min < size)
            min_batch = x_min[pick]

            z = bundle.prior.sample(size, rngs["prior"]) if vanilla else maj_batch

            # G and G' are unchanged until the generator step below
            gz, cache_gz = forward_cached(bundle.generator, z)
            grad_d, d_loss = discriminator_gradients(bundle.discriminator, min_batch, gz)
            _check_finite(d_loss, "L_D", epoch)
            _step(bundle, "D", grad_d, epoch)
            batch_losses = {"L_D": d_loss}

            cache_rx = None
            if not vanilla:
                fake_maj, cache_rx = forward_cached(bundle.reverse_generator, min_batch)
                grad_drev, d_rev_loss = discriminator_gradients(bundle.reverse_discriminator, maj_batch, fake_maj)
                _check_finite(d_rev_loss, "L_D'", epoch)
                _step(bundle, "D'", grad_drev, epoch)
                batch_losses["L_D'"] = d_rev_loss

            grad_g, grad_rev, terms = generator_gradients(
                bundle.generator, bundle.discriminator, bundle.reverse_generator, bundle.reverse_discriminator,
                z, None if vanilla else min_batch, cfg.coefficients, cfg.generator_loss,
                gz_cache=cache_gz, rx_cache=cache_rx,
            )
            batch_losses.update({"L_G": terms.g_loss, "L_G'": terms.g_rev_loss, "L_T": terms.translation,
                                 "L_C": terms.cycle, "L_I": terms.identity})
            for term, value in batch_losses.items():
                _check_finite(value, term, epoch)

            _step(bundle, "G", grad_g, epoch)
            if grad_rev is not None:
                _step(bundle, "G'", grad_rev, epoch)

            for term, value in batch_losses.items():
                if value is not None:
                    sums[term] = sums.get(term, 0.0) + value
            n_batches += 1

        means = {term: total / n_batches for term, total in sums.items()}
        record = EpochLosses(
            epoch=epoch,
            d_loss=means["L_D"],
            g_loss=means["L_G"],
            translation=means.get("L_T"),
            cycle=means.get("L_C"),
            identity=means.get("L_I"),
            d_rev_loss=means.get("L_D'"),
            g_rev_loss=means.get("L_G'"),
        )
        record.generator_objective = GeneratorTerms(record.g_loss, record.g_rev_loss, record.translation,
                                                    record.cycle, record.identity).objective(cfg.coefficients)
        bundle.history.append(record)
        logging.debug(f"epoch {epoch}: L_D={record.d_loss:.6f} L_G={record.g_loss:.6f} "
                      f"objective={record.generator_objective:.6f}")

    last = bundle.history[-1]
    logging.info(f"Finished {cfg.mode} training after {cfg.epochs} epochs: L_D={last.d_loss:.4f}, "
                 f"generator objective={last.generator_objective:.4f}")
    return bundle


def generate(b: TtganBundle, x_maj: np.ndarray) -> np.ndarray:
    """ G(X_maj) row for row. Vanilla mode draws len(X_maj) prior samples from a seed-derived stream instead. """

    x_maj = np.asarray(x_maj, dtype=np.float64)
    if b.mode == "vanilla":
        prior = b.prior or LatentPrior(b.width)
        z = prior.sample(x_maj.shape[0], _rngs(b.config.seed)["generation"])
        return forward(b.generator, z)
    return forward(b.generator, x_maj)


def save_bundle(b: TtganBundle, path) -> Path:
    """ Networks plus the config as one .npz, optimizer moments are not kept. """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"config": np.asarray(json.dumps(b.config.to_dict(), sort_keys=True)),
              "width": np.asarray(b.width, dtype=np.int64)}
    for name, net in _networks(b).items():
        arrays.update(mlp_arrays(net, prefix=name.replace("'", "_rev") + "__"))
    with open(path, "wb") as file:
        np.savez(file, **arrays)
    logging.info(f"Saved {b.mode} bundle to {path}")
    return path


def load_bundle(path) -> TtganBundle:
    with np.load(path, allow_pickle=False) as arrays:
        cfg = TtganConfig.from_dict(json.loads(str(arrays["config"])))
        bundle = TtganBundle(cfg, int(arrays["width"]), mlp_from_arrays(arrays, "G__"), mlp_from_arrays(arrays, "D__"))
        if cfg.mode == "ttgan":
            bundle.reverse_generator = mlp_from_arrays(arrays, "G_rev__")
            bundle.reverse_discriminator = mlp_from_arrays(arrays, "D_rev__")
        else:
            bundle.prior = LatentPrior(bundle.width)

    for name, net in _networks(bundle).items():
        bundle.optimizers[name] = AdamState.for_mlp(net, learning_rate=cfg.learning_rate)
    return bundle


def write_loss_history(b: TtganBundle, path) -> Path:
    return write_tsv(path, LOSS_HISTORY_HEADER, (record.as_row() for record in b.history))
