"""
Small dense-network core used by every GAN piece: SELU hidden layers, identity or sigmoid heads,
hand written reverse-mode gradients and an Adam optimizer. All arithmetic is float64.

Layout: weights[i] has shape (dims[i], dims[i+1]) so a batch is pushed through as x @ W + b, one row per sample.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

HIDDEN_ACTIVATIONS = ("selu",)
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")

GENERATOR_HIDDEN = (64, 128, 256)
DISCRIMINATOR_HIDDEN = (128, 64)


class DivergenceError(FloatingPointError):
    """ Raised when a gradient or loss term stops being finite. """


def selu(z: np.ndarray) -> np.ndarray:
    # expm1 on the clipped branch only, so large positive z never overflows in the unused branch
    return SELU_SCALE * np.where(z >= 0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


def selu_derivative(z: np.ndarray) -> np.ndarray:
    # at exactly 0 the positive branch is used, the derivative there is SELU_SCALE
    return SELU_SCALE * np.where(z >= 0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))


def _pack(arrays: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    """ Copy the arrays into one contiguous buffer and return it with reshaped views into it. """

    flat = np.empty(sum(a.size for a in arrays))
    views, offset = [], 0
    for a in arrays:
        view = flat[offset:offset + a.size].reshape(a.shape)
        view[...] = a
        views.append(view)
        offset += a.size
    return flat, views


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "selu"
    output_activation: str = "identity"
    # weights and biases are views into this buffer
    flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.layer_dims) < 2 or any(int(d) < 1 for d in self.layer_dims):
            raise ValueError(f"layer_dims needs at least two positive sizes, got {self.layer_dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"Unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"Unknown output activation {self.output_activation!r}, expected one of {OUTPUT_ACTIVATIONS}")

        self.layer_dims = [int(d) for d in self.layer_dims]
        weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        biases = [np.asarray(b, dtype=np.float64) for b in self.biases]

        n_layers = len(self.layer_dims) - 1
        if len(weights) != n_layers or len(biases) != n_layers:
            raise ValueError(f"Expected {n_layers} weight/bias pairs for dims {self.layer_dims}")
        for i, (w, b) in enumerate(zip(weights, biases)):
            expected = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ValueError(f"Layer {i}: weight {w.shape} / bias {b.shape} do not match dims {expected}")

        self.flat, views = _pack(_interleave(weights, biases))
        self.weights, self.biases = views[0::2], views[1::2]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        """ Weights then biases per layer, the same order Grad and AdamState use. """
        return _interleave(self.weights, self.biases)

    @property
    def n_params(self) -> int:
        return self.flat.size

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_dims), [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.hidden_activation, self.output_activation)

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.flat).all())


def _interleave(weights: list[np.ndarray], biases: list[np.ndarray]) -> list[np.ndarray]:
    params = []
    for w, b in zip(weights, biases):
        params.extend((w, b))
    return params


@dataclass
class Grad:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        self.flat, views = _pack(_interleave(weights, biases))
        self.weights, self.biases = views[0::2], views[1::2]

    @classmethod
    def zeros_like(cls, m: Mlp) -> "Grad":
        return cls([np.zeros(w.shape) for w in m.weights], [np.zeros(b.shape) for b in m.biases])

    def add(self, other: "Grad") -> "Grad":
        """ In place sum, returns self so several loss terms can be chained. """
        self.flat += other.flat
        return self

    def parameters(self) -> list[np.ndarray]:
        return _interleave(self.weights, self.biases)

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.flat).all())


@dataclass
class AdamState:
    # moments are flat, laid out like Mlp.flat
    first: np.ndarray
    second: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-4

    @classmethod
    def for_mlp(cls, m: Mlp, learning_rate: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(m.n_params), np.zeros(m.n_params), 0, beta1, beta2, eps, learning_rate)


@dataclass
class ForwardCache:
    # activations[i] is the input of layer i, pre_activations[i] its affine output
    activations: list[np.ndarray] = field(default_factory=list)
    pre_activations: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None


def _check_input(m: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.input_dim:
        raise ValueError(f"Input of shape {x.shape} does not match network input dim {m.input_dim}")
    return x


def forward_cached(m: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = _check_input(m, x)
    cache = ForwardCache()

    a = x
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        cache.activations.append(a)
        z = a @ w
        z += b
        cache.pre_activations.append(z)
        if i < m.n_layers - 1:
            a = selu(z)
        elif m.output_activation == "sigmoid":
            a = expit(z)
        else:
            a = z

    cache.output = a
    return a, cache


def forward(m: Mlp, x: np.ndarray) -> np.ndarray:
    return forward_cached(m, x)[0]


def _selu_slope(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # below 0, selu'(z) = selu(z) + SCALE*ALPHA
    return np.where(z >= 0, SELU_SCALE, a + SELU_SCALE * SELU_ALPHA)


def backward(m: Mlp, x: np.ndarray, upstream: np.ndarray, cache: ForwardCache | None = None) -> tuple[Grad, np.ndarray]:
    """
    Gradients of sum(upstream * forward(m, x)) with respect to every parameter and to x.

    Callers fold any batch averaging into ``upstream``. Pass the cache from forward_cached to skip the recompute.
    """

    if cache is None:
        _, cache = forward_cached(m, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.output.shape:
        raise ValueError(f"Upstream gradient shape {upstream.shape} does not match output shape {cache.output.shape}")

    if m.output_activation == "sigmoid":
        out = cache.output
        delta = upstream * out * (1.0 - out)
    else:
        delta = upstream

    grad = Grad.zeros_like(m)
    for i in reversed(range(m.n_layers)):
        np.matmul(cache.activations[i].T, delta, out=grad.weights[i])
        np.sum(delta, axis=0, out=grad.biases[i])
        upstream_input = delta @ m.weights[i].T
        if i > 0:
            delta = upstream_input * _selu_slope(cache.pre_activations[i - 1], cache.activations[i])

    return grad, upstream_input


def adam_step(params: Mlp, g: Grad, s: AdamState) -> tuple[Mlp, AdamState]:
    """
    Bias-corrected Adam over the whole flat parameter vector, updates ``params`` and ``s`` in place and returns both.
        m_t = b1*m + (1-b1)*g, v_t = b2*v + (1-b2)*g^2
        p -= lr * (m_t/(1-b1^t)) / (sqrt(v_t/(1-b2^t)) + eps)
    """

    if not g.all_finite():
        raise DivergenceError("non-finite gradient entries")
    if g.flat.shape != params.flat.shape or s.first.shape != params.flat.shape:
        raise ValueError("Gradient / optimizer state do not match the network layout")

    s.step_count += 1
    bias1 = 1.0 - s.beta1 ** s.step_count
    bias2 = 1.0 - s.beta2 ** s.step_count

    s.first *= s.beta1
    s.first += (1.0 - s.beta1) * g.flat
    s.second *= s.beta2
    s.second += (1.0 - s.beta2) * np.square(g.flat)
    params.flat -= s.learning_rate * (s.first / bias1) / (np.sqrt(s.second / bias2) + s.eps)

    return params, s


def init_mlp(layer_dims, rng, output_activation: str = "identity") -> Mlp:
    """ Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases. ``rng`` is a Generator or a seed. """

    rng = np.random.default_rng(rng)
    dims = [int(d) for d in layer_dims]
    if any(d < 1 for d in dims):
        raise ValueError(f"Layer sizes must be >= 1, got {dims}")

    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases, "selu", output_activation)


def make_generator(input_dim: int, output_dim: int, rng=0) -> Mlp:
    return init_mlp([input_dim, *GENERATOR_HIDDEN, output_dim], rng, "identity")


def make_discriminator(input_dim: int, rng=0) -> Mlp:
    return init_mlp([input_dim, *DISCRIMINATOR_HIDDEN, 1], rng, "sigmoid")


def mlp_arrays(m: Mlp, prefix: str = "") -> dict[str, np.ndarray]:
    arrays = {
        f"{prefix}layer_dims": np.asarray(m.layer_dims, dtype=np.int64),
        f"{prefix}activations": np.asarray([m.hidden_activation, m.output_activation]),
    }
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        arrays[f"{prefix}W{i}"] = w
        arrays[f"{prefix}b{i}"] = b
    return arrays


def mlp_from_arrays(arrays, prefix: str = "") -> Mlp:
    try:
        dims = [int(d) for d in arrays[f"{prefix}layer_dims"]]
        hidden, output = (str(a) for a in arrays[f"{prefix}activations"])
        weights = [np.array(arrays[f"{prefix}W{i}"]) for i in range(len(dims) - 1)]
        biases = [np.array(arrays[f"{prefix}b{i}"]) for i in range(len(dims) - 1)]
    except KeyError as exc:
        raise ValueError(f"Checkpoint is missing array {exc.args[0]!r}") from exc
    return Mlp(dims, weights, biases, hidden, output)


def save_mlp(m: Mlp, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as file:
        np.savez(file, **mlp_arrays(m))
    logging.info(f"Saved network {m.layer_dims} to {path}")
    return path


def load_mlp(path) -> Mlp:
    with np.load(path, allow_pickle=False) as arrays:
        return mlp_from_arrays(arrays)
