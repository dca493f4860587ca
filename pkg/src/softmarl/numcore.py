"""Dense networks with hand-written reverse-mode gradients, Adam, and target-network helpers.

Everything is float64 numpy. Inputs may be a single vector ``(in,)`` or a batch
``(N, in)``; outputs follow the same convention.

Parameters (and gradients, and Adam moments) live in one flat vector laid out
``w0, b0, w1, b1, ...``; ``weights[k]`` and ``biases[k]`` are views into it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConsistencyError, NumericError, ShapeError

LINEAR = "linear"
TANH_BOX = "tanh_box"
RELU = "relu"

# Keeps tanh-scaled outputs strictly inside the box even when tanh saturates to 1.0.
_TANH_SHRINK = 1.0 - 1e-12


def _layer_views(flat, sizes):
    weights, biases = [], []
    i = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[i:i + fan_in * fan_out].reshape(fan_out, fan_in))
        i += fan_in * fan_out
        biases.append(flat[i:i + fan_out])
        i += fan_out
    return weights, biases


def _param_count(sizes):
    return sum(fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:]))


@dataclass
class MLPParams:
    layer_sizes: list[int]
    flat: np.ndarray
    hidden_activation: str = RELU
    output_activation: str = LINEAR
    box_lo: np.ndarray | None = None
    box_hi: np.ndarray | None = None
    weights: list = field(init=False, repr=False)
    biases: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.flat.shape != (_param_count(self.layer_sizes),):
            raise ShapeError("flat parameter vector does not match layer_sizes")
        self.weights, self.biases = _layer_views(self.flat, self.layer_sizes)

    @classmethod
    def from_arrays(cls, weights, biases, output_activation=LINEAR, box=None) -> "MLPParams":
        """Build a network from explicit per-layer arrays (weights are ``(out, in)``)."""
        weights = [np.atleast_2d(np.asarray(w, dtype=float)) for w in weights]
        biases = [np.atleast_1d(np.asarray(b, dtype=float)) for b in biases]
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.shape[1] != sizes[k] or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} do not chain")
        flat = np.concatenate([a.ravel() for pair in zip(weights, biases) for a in pair])
        lo, hi = _check_box(output_activation, box, sizes[-1])
        return cls(sizes, flat, RELU, output_activation, lo, hi)

    def copy(self) -> "MLPParams":
        lo = None if self.box_lo is None else self.box_lo.copy()
        hi = None if self.box_hi is None else self.box_hi.copy()
        return MLPParams(list(self.layer_sizes), self.flat.copy(), self.hidden_activation, self.output_activation, lo, hi)

    @property
    def num_params(self) -> int:
        return self.flat.size


@dataclass
class MLPGrads:
    layer_sizes: list[int]
    flat: np.ndarray
    weights: list = field(init=False, repr=False)
    biases: list = field(init=False, repr=False)

    def __post_init__(self):
        self.weights, self.biases = _layer_views(self.flat, self.layer_sizes)

    @classmethod
    def zeros_like(cls, params: MLPParams) -> "MLPGrads":
        return cls(list(params.layer_sizes), np.zeros_like(params.flat))

    def norm(self) -> float:
        return float(np.sqrt(self.flat @ self.flat))


@dataclass
class ActivationCache:
    """Per-layer inputs and pre-activations recorded by :func:`mlp_forward`."""

    params_id: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    squeeze: bool


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0


def _check_box(output_activation, box, width):
    if output_activation not in (LINEAR, TANH_BOX):
        raise ConfigurationError(f"unknown output activation {output_activation!r}")
    if output_activation != TANH_BOX:
        return None, None
    if box is None:
        raise ConfigurationError("tanh_box output requires a box")
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (width,)).copy()
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (width,)).copy()
    if np.any(lo >= hi):
        raise ConfigurationError(f"box requires lo < hi, got {box!r}")
    return lo, hi


def mlp_init(layer_sizes, output_activation=LINEAR, rng_seed=0, box=None) -> MLPParams:
    """Uniform fan-in initialisation: weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    ``box`` is a ``(lo, hi)`` pair (scalars or per-output arrays), required for ``tanh_box``.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ConfigurationError(f"layer_sizes must have >= 2 positive entries, got {layer_sizes!r}")
    lo, hi = _check_box(output_activation, box, sizes[-1])
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    params = MLPParams(sizes, np.zeros(_param_count(sizes)), RELU, output_activation, lo, hi)
    for w in params.weights:
        bound = 1.0 / np.sqrt(w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def mlp_forward(params: MLPParams, x) -> tuple[np.ndarray, ActivationCache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != params.layer_sizes[0]:
        raise ShapeError(f"expected input width {params.layer_sizes[0]}, got shape {x.shape}")
    if not np.isfinite(np.sum(h)):
        raise NumericError("non-finite network input")
    inputs, pre = [], []
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if k < last else z
    if params.output_activation == TANH_BOX:
        mid = 0.5 * (params.box_hi + params.box_lo)
        half = 0.5 * (params.box_hi - params.box_lo) * _TANH_SHRINK
        h = mid + half * np.tanh(h)
    cache = ActivationCache(id(params), inputs, pre, squeeze)
    return (h[0] if squeeze else h), cache


def squash_derivative(params: MLPParams, pre) -> np.ndarray:
    """Elementwise derivative of the tanh-box output map at pre-activation ``pre``."""
    half = 0.5 * (params.box_hi - params.box_lo) * _TANH_SHRINK
    t = np.tanh(pre)
    return half * (1.0 - t * t)


def mlp_backward(params: MLPParams, cache: ActivationCache, output_gradient,
                 wrt_preactivation=False) -> tuple[MLPGrads, np.ndarray]:
    """Reverse pass; gradients are summed over the batch.

    With ``wrt_preactivation`` the seed is taken as the gradient with respect to
    the last layer's pre-activation, skipping the output squash.
    """
    if cache.params_id != id(params) or len(cache.pre) != len(params.weights):
        raise ConsistencyError("activation cache was not produced by these parameters")
    g = np.asarray(output_gradient, dtype=float)
    if cache.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != cache.pre[-1].shape:
        raise ShapeError(f"output gradient shape {g.shape} does not match output {cache.pre[-1].shape}")
    if params.output_activation == TANH_BOX and not wrt_preactivation:
        g = g * squash_derivative(params, cache.pre[-1])
    grads = MLPGrads.zeros_like(params)
    n = len(params.weights)
    for k in range(n - 1, -1, -1):
        if k < n - 1:
            g = g * (cache.pre[k] > 0.0)
        grads.weights[k][...] = g.T @ cache.inputs[k]
        grads.biases[k][...] = g.sum(axis=0)
        g = g @ params.weights[k]
    return grads, (g[0] if cache.squeeze else g)


def adam_init(params: MLPParams, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> OptimizerState:
    return OptimizerState(np.zeros_like(params.flat), np.zeros_like(params.flat), learning_rate, beta1, beta2,
                          epsilon, 0)


def adam_step(state: OptimizerState, params: MLPParams, grads: MLPGrads) -> tuple[MLPParams, OptimizerState]:
    """Bias-corrected Adam descent step, applied to ``params`` in place."""
    g = grads.flat
    if g.shape != params.flat.shape or state.first_moment.shape != params.flat.shape:
        raise ShapeError("gradient / moment shapes do not match parameters")
    if not np.isfinite(np.sum(g)):
        raise NumericError("non-finite gradient; parameters left unchanged")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    m, v = state.first_moment, state.second_moment
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    step = state.learning_rate * np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
    eps_hat = state.epsilon * np.sqrt(1.0 - b2**t)
    # algebraically equal to lr * m_hat / (sqrt(v_hat) + eps)
    params.flat -= step * m / (np.sqrt(v) + eps_hat)
    return params, state


def soft_update(target: MLPParams, source: MLPParams, tau: float) -> MLPParams:
    """Polyak averaging ``target <- (1 - tau) * target + tau * source``, in place."""
    if not 0.0 < tau <= 1.0:
        raise ConfigurationError(f"tau must lie in (0, 1], got {tau}")
    if target.layer_sizes != source.layer_sizes:
        raise ConsistencyError("target and source shapes differ")
    if tau == 1.0:
        target.flat[...] = source.flat
    else:
        target.flat *= 1.0 - tau
        target.flat += tau * source.flat
    return target


def flatten(params: MLPParams) -> np.ndarray:
    return params.flat.copy()


def unflatten(params: MLPParams, vector) -> MLPParams:
    out = params.copy()
    out.flat[...] = vector
    return out
