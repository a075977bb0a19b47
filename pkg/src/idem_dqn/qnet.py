"""Two-layer fully connected Q-network with hand-written backprop and Adam.

All parameters live in one flat float64 vector; ``w1``, ``b1``, ``w2`` and
``b2`` are views into it, so the optimizer updates every tensor with a
handful of vectorised operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonFiniteGradient

CHECKPOINT_FORMAT = "idem-qnet/1"
ACTIVATIONS = ("relu", "tanh")
PARAM_NAMES = ("w1", "b1", "w2", "b2")


class LayerParams(NamedTuple):
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)


def _shapes(n_states: int, n_actions: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {"w1": (hidden, n_states), "b1": (hidden,), "w2": (n_actions, hidden), "b2": (n_actions,)}


def _views(flat: np.ndarray, shapes: dict[str, tuple[int, ...]]) -> dict[str, np.ndarray]:
    out, offset = {}, 0
    for name, shape in shapes.items():
        size = shape[0] * shape[1] if len(shape) == 2 else shape[0]
        out[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return out


def n_parameters(n_states: int, n_actions: int, hidden: int) -> int:
    return hidden * n_states + hidden + n_actions * hidden + n_actions


class QNetwork:
    """``q = W2 · act(W1 · x + b1) + b2`` over one-hot state vectors."""

    def __init__(self, n_states: int, n_actions: int = 4, hidden: int = 50,
                 params: np.ndarray | None = None, activation: str = "relu"):
        if min(n_states, n_actions, hidden) < 1:
            raise ConfigError("network dimensions must be >= 1")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        self.n_states, self.n_actions, self.hidden = n_states, n_actions, hidden
        self.activation = activation
        size = n_parameters(n_states, n_actions, hidden)
        if params is None:
            params = np.zeros(size)
        elif params.shape != (size,):
            raise DimensionMismatch(f"expected {size} parameters, got shape {params.shape}")
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        self.shapes = _shapes(n_states, n_actions, hidden)
        v = _views(self.params, self.shapes)
        self.w1, self.b1, self.w2, self.b2 = v["w1"], v["b1"], v["w2"], v["b2"]

    @property
    def layer1(self) -> LayerParams:
        return LayerParams(self.w1, self.b1)

    @property
    def layer2(self) -> LayerParams:
        return LayerParams(self.w2, self.b2)

    def copy(self) -> QNetwork:
        return QNetwork(self.n_states, self.n_actions, self.hidden, self.params.copy(), self.activation)

    def _hidden(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = x @ self.w1.T + self.b1
        if self.activation == "relu":
            return z, np.maximum(z, 0.0)
        return z, np.tanh(z)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def init_network(n_states: int, n_actions: int = 4, hidden: int = 50, seed=None,
                 activation: str = "relu") -> QNetwork:
    """Weights uniform in ``±1/sqrt(fan_in)``, biases zero."""
    net = QNetwork(n_states, n_actions, hidden, activation=activation)
    rng = np.random.default_rng(seed)
    net.w1[...] = rng.uniform(-1.0, 1.0, net.w1.shape) / np.sqrt(n_states)
    net.w2[...] = rng.uniform(-1.0, 1.0, net.w2.shape) / np.sqrt(hidden)
    return net


def forward(net: QNetwork, x: np.ndarray) -> np.ndarray:
    """Q-values for one state vector ``(n_states,)`` or a batch ``(B, n_states)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.n_states:
        raise DimensionMismatch(f"state input of shape {x.shape} does not match n_states={net.n_states}")
    _, h = net._hidden(x)
    return h @ net.w2.T + net.b2


@dataclass
class GradientSet:
    flat: np.ndarray
    loss: float
    shapes: dict[str, tuple[int, ...]] = field(repr=False)
    residuals: np.ndarray | None = field(default=None, repr=False)  # y - Q(s, a) per sample

    def __post_init__(self):
        v = _views(self.flat, self.shapes)
        self.w1, self.b1, self.w2, self.b2 = v["w1"], v["b1"], v["w2"], v["b2"]


def backward(net: QNetwork, states: np.ndarray, actions: np.ndarray,
             targets: np.ndarray) -> GradientSet:
    """Gradient of ``mean((y - Q(s, a))**2)`` with the targets held constant.

    ``states`` is a ``(B, n_states)`` matrix of encoded states; only the
    Q-value of the taken action receives gradient.
    """
    x = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.n_states:
        raise DimensionMismatch(f"batch states of shape {x.shape} do not match n_states={net.n_states}")
    batch = x.shape[0]
    if batch == 0 or actions.shape != (batch,) or targets.shape != (batch,):
        raise DimensionMismatch("states, actions and targets need the same nonzero batch length")
    if np.any(actions < 0) or np.any(actions >= net.n_actions):
        raise DimensionMismatch("action index out of range")

    z, h = net._hidden(x)
    q = h @ net.w2.T + net.b2
    rows = np.arange(batch)
    err = targets - q[rows, actions]
    dq = np.zeros_like(q)
    dq[rows, actions] = -2.0 * err / batch
    return _backprop(net, x, z, h, dq, err)


def state_q_table(net: QNetwork) -> np.ndarray:
    """Q-values of every one-hot state, shape ``(n_states, n_actions)``."""
    return forward(net, np.eye(net.n_states))


def backward_indexed(net: QNetwork, states: np.ndarray, actions: np.ndarray,
                     targets: np.ndarray) -> GradientSet:
    """:func:`backward` for one-hot inputs given as state indices.

    Samples sharing a ``(state, action)`` pair are summed before
    backpropagating through the ``n_states`` distinct inputs, so the cost
    no longer grows with the batch through the matrix products.
    """
    states = np.asarray(states, dtype=np.intp)
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    batch = states.shape[0] if states.ndim == 1 else 0
    if batch == 0 or actions.shape != (batch,) or targets.shape != (batch,):
        raise DimensionMismatch("states, actions and targets need the same nonzero batch length")
    if states.min() < 0 or states.max() >= net.n_states or actions.min() < 0 or actions.max() >= net.n_actions:
        raise DimensionMismatch("state or action index out of range")

    x = np.eye(net.n_states)
    z, h = net._hidden(x)
    q = h @ net.w2.T + net.b2
    err = targets - q[states, actions]
    coef = -2.0 * err / batch
    dq = np.bincount(states * net.n_actions + actions, weights=coef,
                     minlength=net.n_states * net.n_actions).reshape(net.n_states, net.n_actions)
    return _backprop(net, x, z, h, dq, err)


def _backprop(net: QNetwork, x, z, h, dq, err) -> GradientSet:
    loss = float(np.mean(err * err))
    flat = np.empty_like(net.params)
    g = _views(flat, net.shapes)
    g["w2"][...] = dq.T @ h
    g["b2"][...] = dq.sum(axis=0)
    dh = dq @ net.w2
    if net.activation == "relu":
        dz = dh * (z > 0.0)
    else:
        dz = dh * (1.0 - h * h)
    g["w1"][...] = dz.T @ x
    g["b1"][...] = dz.sum(axis=0)
    return GradientSet(flat, loss, net.shapes, err)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigError("Adam eps must be > 0")

    @classmethod
    def for_network(cls, net: QNetwork, beta1: float = 0.9, beta2: float = 0.999,
                    eps: float = 1e-8) -> AdamState:
        return cls(np.zeros_like(net.params), np.zeros_like(net.params), 0, beta1, beta2, eps)

    def copy(self) -> AdamState:
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def _check_step(grads: np.ndarray, params: np.ndarray, lr: float) -> None:
    if grads.shape != params.shape:
        raise DimensionMismatch(f"gradient shape {grads.shape} != parameter shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("gradient contains NaN or inf")
    if not lr > 0.0:
        raise ConfigError(f"step size must be > 0, got {lr}")


def adam_step(net: QNetwork, adam: AdamState, grads: GradientSet | np.ndarray,
              lr: float) -> tuple[QNetwork, AdamState]:
    """One bias-corrected Adam update of ``net`` in place with step size ``lr``."""
    g = grads.flat if isinstance(grads, GradientSet) else np.asarray(grads, dtype=np.float64)
    _check_step(g, net.params, lr)
    adam.t += 1
    b1, b2 = adam.beta1, adam.beta2
    adam.m *= b1
    adam.m += (1.0 - b1) * g
    adam.v *= b2
    adam.v += (1.0 - b2) * (g * g)
    m_hat = adam.m / (1.0 - b1 ** adam.t)
    v_hat = adam.v / (1.0 - b2 ** adam.t)
    net.params -= lr * m_hat / (np.sqrt(v_hat) + adam.eps)
    return net, adam


def sgd_step(net: QNetwork, grads: GradientSet | np.ndarray, lr: float) -> QNetwork:
    g = grads.flat if isinstance(grads, GradientSet) else np.asarray(grads, dtype=np.float64)
    _check_step(g, net.params, lr)
    net.params -= lr * g
    return net


def save_checkpoint(path: str | Path, net: QNetwork, adam: AdamState | None = None) -> None:
    """Write ``net`` (and optionally its Adam state) to a ``.npz`` archive.

    Layout: ``format`` tag, ``dims`` = (n_states, n_actions, hidden),
    ``activation``, the flat row-major ``params`` vector in w1, b1, w2, b2
    order, and, when present, ``adam_m``, ``adam_v`` and
    ``adam_meta`` = (t, beta1, beta2, eps).
    """
    arrays = {
        "format": np.array(CHECKPOINT_FORMAT),
        "dims": np.array([net.n_states, net.n_actions, net.hidden]),
        "activation": np.array(net.activation),
        "params": net.params,
    }
    if adam is not None:
        arrays.update(adam_m=adam.m, adam_v=adam.v,
                      adam_meta=np.array([adam.t, adam.beta1, adam.beta2, adam.eps]))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[QNetwork, AdamState | None]:
    with np.load(path) as data:
        tag = str(data["format"])
        if tag != CHECKPOINT_FORMAT:
            raise ConfigError(f"unsupported checkpoint format {tag!r}")
        n_states, n_actions, hidden = (int(d) for d in data["dims"])
        net = QNetwork(n_states, n_actions, hidden, data["params"].copy(), str(data["activation"]))
        adam = None
        if "adam_m" in data:
            t, b1, b2, eps = data["adam_meta"]
            adam = AdamState(data["adam_m"].copy(), data["adam_v"].copy(), int(t), float(b1), float(b2), float(eps))
    return net, adam
