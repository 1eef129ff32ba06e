"""Small dense networks with hand-written reverse mode and Adam.

Networks are chains ``A_{L+1} o rho o A_L o ... o rho o A_0`` with
``A_l(x) = W_l x + b_l``; batches are row-major ``(n, d_in)`` arrays.
Everything is float64.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .rng import RngStream

ACTIVATIONS = ("tanh", "relu")
OUTPUT_TRANSFORMS = ("identity", "softplus")
_MAGIC = b"RENEWCAP-MLP 1\n"


class NonFiniteLossError(FloatingPointError):
    def __init__(self, index: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at batch index {index}")
        self.index = index


@dataclass
class MLPParams:
    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    output_transform: str = "identity"

    def __post_init__(self) -> None:
        self.dims = [int(d) for d in self.dims]
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.output_transform not in OUTPUT_TRANSFORMS:
            raise ValueError(f"unknown output transform {self.output_transform!r}")
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of layers does not match dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[l + 1], self.dims[l]) or b.shape != (self.dims[l + 1],):
                raise ValueError(f"layer {l} has shapes {w.shape}, {b.shape}")

    @property
    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order ``[W0, b0, W1, b1, ...]`` (views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays)

    @property
    def n_hidden(self) -> int:
        return len(self.dims) - 2

    def copy(self) -> "MLPParams":
        return MLPParams(list(self.dims), [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.activation, self.output_transform)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def set_flat(self, theta: np.ndarray) -> None:
        pos = 0
        for a in self.arrays:
            a[...] = theta[pos:pos + a.size].reshape(a.shape)
            pos += a.size

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return mlp_forward(self, x)


def param_count(d0: int, d1: int, L: int, m: int) -> int:
    """Closed-form parameter count.

    ``L`` counts the width-``m`` to width-``m`` affine maps, so the network
    has ``L + 1`` hidden layers.
    """
    return m * d0 + m + L * (m * m + m) + d1 * m + d1


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


class Cache(NamedTuple):
    inputs: list[np.ndarray]  # input of every affine layer
    hidden: list[np.ndarray]  # post-activation of every hidden layer
    logits: np.ndarray        # last affine output, before the output transform


def mlp_forward(net: MLPParams, x: np.ndarray, return_cache: bool = False):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.dims[0]:
        raise ValueError(f"expected input width {net.dims[0]}, got {x.shape[1]}")
    inputs, hidden = [], []
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ w.T + b
        if l < last:
            a = np.tanh(z) if net.activation == "tanh" else np.maximum(z, 0.0)
            hidden.append(a)
        else:
            a = z
    y = softplus(a) if net.output_transform == "softplus" else a
    if single:
        y = y[0]
    if return_cache:
        return y, Cache(inputs, hidden, a)
    return y


def mlp_backward(net: MLPParams, cache: Cache, g_out: np.ndarray):
    """Vector-Jacobian product.

    ``g_out`` is the gradient of a scalar w.r.t. the network outputs
    ``(n, d_out)``.  Returns ``(grads, g_in)`` where ``grads`` follows
    :attr:`MLPParams.arrays` and ``g_in`` is the gradient w.r.t. the inputs.
    """
    g = np.asarray(g_out, dtype=np.float64).reshape(cache.logits.shape)
    if net.output_transform == "softplus":
        g = g * sigmoid(cache.logits)
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))
    for l in range(len(net.weights) - 1, -1, -1):
        grads[2 * l] = g.T @ cache.inputs[l]
        grads[2 * l + 1] = g.sum(axis=0)
        g = g @ net.weights[l]
        if l > 0:
            h = cache.hidden[l - 1]
            g = g * (1.0 - h * h) if net.activation == "tanh" else g * (h > 0.0)
    return grads, g


class GradBundle(NamedTuple):
    loss: float
    grads: list[np.ndarray]


LossFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def check_finite(values: np.ndarray, message: str = "non-finite loss") -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        raise NonFiniteLossError(int(np.flatnonzero(bad.reshape(len(values), -1).any(axis=1))[0]),
                                 message)


def mlp_gradient(net: MLPParams, x: np.ndarray, loss_fn: LossFn) -> GradBundle:
    """Mean batch loss and its exact gradient.

    ``loss_fn(y)`` maps outputs ``(n, d_out)`` to per-sample losses ``(n,)``
    and their derivatives ``(n, d_out)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("empty batch")
    y, cache = mlp_forward(net, x, return_cache=True)
    losses, dloss = loss_fn(y)
    losses = np.asarray(losses, dtype=np.float64)
    check_finite(losses)
    grads, _ = mlp_backward(net, cache, np.asarray(dloss).reshape(y.shape) / len(x))
    return GradBundle(float(np.mean(losses)), grads)


def init_params(dims, activation: str = "tanh", scheme: str = "glorot-uniform",
                rng: RngStream | np.random.Generator | None = None,
                output_transform: str = "identity") -> MLPParams:
    """Random weights (``glorot-uniform`` or ``he-normal``) and zero biases."""
    if isinstance(rng, RngStream):
        gen = rng.numpy_generator()
    elif rng is None:
        gen = np.random.default_rng(0)
    else:
        gen = rng
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if scheme == "glorot-uniform":
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = gen.uniform(-bound, bound, size=(fan_out, fan_in))
        elif scheme == "he-normal":
            w = gen.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MLPParams(dims, weights, biases, activation, output_transform)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def for_params(cls, net: MLPParams, lr: float = 1e-4, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in net.arrays], [np.zeros_like(a) for a in net.arrays],
                   lr=lr, **kw)


def adam_step(state: AdamState, net: MLPParams, grads) -> None:
    """Bias-corrected Adam update, in place on ``state`` and ``net``."""
    if isinstance(grads, GradBundle):
        grads = grads.grads
    params = net.arrays
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class Adam:
    """Convenience wrapper binding an :class:`AdamState` to one network."""

    net: MLPParams
    lr: float = 1e-4
    state: AdamState = field(init=False)

    def __post_init__(self) -> None:
        self.state = AdamState.for_params(self.net, lr=self.lr)

    def step(self, grads) -> None:
        adam_step(self.state, self.net, grads)


def save_params(net: MLPParams, path) -> None:
    """One JSON header line followed by the raw little-endian float64 parameters."""
    header = {
        "dims": net.dims,
        "activation": net.activation,
        "output_transform": net.output_transform,
        "dtype": "<f8",
        "n_params": net.n_params,
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(net.flat().astype("<f8").tobytes())


def load_params(path) -> MLPParams:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a renewcap network file")
    rest = raw[len(_MAGIC):]
    line, _, body = rest.partition(b"\n")
    header = json.loads(line)
    theta = np.frombuffer(body, dtype=header["dtype"]).astype(np.float64)
    if theta.size != header["n_params"]:
        raise ValueError(f"{path}: expected {header['n_params']} parameters, found {theta.size}")
    dims = header["dims"]
    net = MLPParams(dims, [np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:])],
                    [np.zeros(o) for o in dims[1:]], header["activation"],
                    header["output_transform"])
    net.set_flat(theta)
    return net
