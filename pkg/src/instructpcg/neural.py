"""Dense feed-forward networks with hand-written reverse-mode gradients and Adam.

Parameters are kept as a flat list ``[W0, b0, W1, b1, ...]`` with ``Wk`` of
shape (fan_in, fan_out); inputs are batched row vectors of shape (B, n) or a
single vector of shape (n,).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softmax")


@dataclass
class DenseNet:
    sizes: tuple
    params: list
    hidden: str = "tanh"
    output: str = "identity"

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2:
            raise ValueError("a network needs at least input and output sizes")
        if self.hidden not in HIDDEN_ACTIVATIONS or self.output not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden!r}/{self.output!r}")
        if len(self.params) != 2 * (len(self.sizes) - 1):
            raise ValueError("parameter count does not match layer sizes")
        for k, (n_in, n_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            if self.params[2 * k].shape != (n_in, n_out) or self.params[2 * k + 1].shape != (n_out,):
                raise ValueError(f"layer {k} parameter shapes inconsistent with sizes {self.sizes}")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "DenseNet":
        return DenseNet(self.sizes, [p.copy() for p in self.params], self.hidden, self.output)

    def zeros_like(self) -> list:
        return [np.zeros_like(p) for p in self.params]


def init_net(sizes: Sequence[int], seed: int = 0, hidden: str = "tanh", output: str = "identity",
             rng: np.random.Generator | None = None) -> DenseNet:
    """Uniform fan-in init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    params = []
    for n_in, n_out in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        params.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        params.append(np.zeros(n_out))
    return DenseNet(tuple(sizes), params, hidden, output)


def _act(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "sigmoid":
        return sigmoid(x)
    if name == "softmax":
        return softmax(x)
    return x


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _as_batch(net: DenseNet, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.in_dim:
        raise ValueError(f"input shape {x.shape} does not match network input size {net.in_dim}")
    return xb, single


def forward_cache(net: DenseNet, x):
    """Run the net, keeping per-layer inputs; the last entry is the output pre-activation."""
    h, single = _as_batch(net, x)
    acts = [h]
    for k in range(net.n_layers):
        z = h @ net.params[2 * k] + net.params[2 * k + 1]
        h = z if k == net.n_layers - 1 else _act(net.hidden, z)
        acts.append(h)
    return acts, single


def forward(net: DenseNet, x, logits: bool = False):
    """Network output; ``logits=True`` skips the output activation."""
    acts, single = forward_cache(net, x)
    out = acts[-1] if logits else _act(net.output, acts[-1])
    return out[0] if single else out


def backward(net: DenseNet, x, upstream, logits: bool = False, cache=None, input_grad: bool = True):
    """Gradients of sum(upstream * output) w.r.t. parameters and input.

    ``upstream`` is the gradient w.r.t. the activated output, or w.r.t. the
    output pre-activation when ``logits=True``. Batch gradients are summed.
    Returns (param_grads, input_grad); input_grad is None when not requested.
    """
    acts, single = cache if cache is not None else forward_cache(net, x)
    g = np.asarray(upstream, dtype=np.float64)
    g = g[None, :] if g.ndim == 1 else g
    if g.shape != acts[-1].shape:
        raise ValueError(f"upstream shape {g.shape} does not match output shape {acts[-1].shape}")
    if not logits:
        if net.output == "sigmoid":
            s = sigmoid(acts[-1])
            g = g * s * (1.0 - s)
        elif net.output == "softmax":
            p = softmax(acts[-1])
            g = p * (g - (g * p).sum(axis=-1, keepdims=True))
    grads = [None] * len(net.params)
    for k in reversed(range(net.n_layers)):
        h_in = acts[k]
        grads[2 * k] = h_in.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k == 0 and not input_grad:
            return grads, None
        g = g @ net.params[2 * k].T
        if k > 0:
            h = acts[k]
            if net.hidden == "tanh":
                g = g * (1.0 - h * h)
            else:
                g = g * (h > 0)
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params: list, grads: list) -> list:
    """Bias-corrected Adam update, in place on ``params`` (also returned)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("optimizer state, params and grads must align")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    step = state.lr / c1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        denom = np.sqrt(v / c2)
        denom += state.eps
        np.divide(m, denom, out=denom)
        denom *= step
        p -= denom
    return params


def clip_grad_norm(grads: list, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm
