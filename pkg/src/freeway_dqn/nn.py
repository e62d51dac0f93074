"""Small dense Q-networks in numpy with hand-written backprop.

Two architectures are supported. ``PLAIN`` is a single stack of dense layers
ending in one output per action. ``DUELING`` has a shared trunk feeding a
value head (one output) and an advantage head (one output per action), and
combines them as ``Q = V + (A - max A)``.

Weight matrices are stored with rows indexing outputs, so a layer computes
``act(W @ x + b)``. Everything is float64.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import RejectedInputError, WrongArchitectureError

__all__ = [
    "Activation",
    "Architecture",
    "LayerSpec",
    "QNetworkParams",
    "Gradients",
    "ForwardCache",
    "make_plain",
    "make_dueling",
    "default_plain",
    "default_dueling",
    "forward",
    "dueling_forward",
    "q_values",
    "loss_and_grad",
    "finite_diff_grad",
    "sgd_step",
    "copy_params",
    "clip_grad_norm",
    "grad_norm",
]


class Activation(str, Enum):
    RELU = "RELU"
    LINEAR = "LINEAR"
    # Smooth activation, kept for gradient-oracle tests where piecewise-linear
    # nets make central differences exact.
    TANH = "TANH"


class Architecture(str, Enum):
    PLAIN = "PLAIN"
    DUELING = "DUELING"


STACKS = {
    Architecture.PLAIN: ("layers",),
    Architecture.DUELING: ("trunk", "value_head", "advantage_head"),
}


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise RejectedInputError(f"layer dims must be >= 1, got {self.in_dim}x{self.out_dim}")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass
class QNetworkParams:
    """Weights and biases of a plain or dueling network.

    ``specs``, ``weights`` and ``biases`` are keyed by stack name
    (``layers`` for plain nets; ``trunk``/``value_head``/``advantage_head``
    for dueling ones).
    """

    architecture: Architecture
    specs: dict[str, list[LayerSpec]]
    weights: dict[str, list[np.ndarray]]
    biases: dict[str, list[np.ndarray]]

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        _validate(self)

    @property
    def stack_names(self) -> tuple[str, ...]:
        return STACKS[self.architecture]

    @property
    def input_dim(self) -> int:
        return self.specs[self.stack_names[0]][0].in_dim

    @property
    def n_actions(self) -> int:
        return self.specs[self.stack_names[-1]][-1].out_dim

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Yield ``(name, array)`` for every parameter in canonical order."""
        for stack in self.stack_names:
            for i, (w, b) in enumerate(zip(self.weights[stack], self.biases[stack])):
                yield f"{stack}.{i}.W", w
                yield f"{stack}.{i}.b", b

    def descriptor(self) -> str:
        parts = []
        for stack in self.stack_names:
            dims = " ".join(f"{s.in_dim}x{s.out_dim}:{s.activation.value}" for s in self.specs[stack])
            parts.append(f"{stack}[{dims}]")
        return f"{self.architecture.value} " + " ".join(parts)


@dataclass
class Gradients:
    weights: dict[str, list[np.ndarray]]
    biases: dict[str, list[np.ndarray]]

    @classmethod
    def zeros_like(cls, net: QNetworkParams) -> "Gradients":
        return cls(
            weights={k: [np.zeros_like(w) for w in v] for k, v in net.weights.items()},
            biases={k: [np.zeros_like(b) for b in v] for k, v in net.biases.items()},
        )

    def arrays(self) -> Iterator[np.ndarray]:
        for stack in self.weights:
            for w, b in zip(self.weights[stack], self.biases[stack]):
                yield w
                yield b


def _validate(net: QNetworkParams) -> None:
    names = STACKS[net.architecture]
    if set(net.specs) != set(names):
        raise RejectedInputError(f"{net.architecture.value} net needs stacks {names}, got {tuple(net.specs)}")
    for name in names:
        specs = net.specs[name]
        if not specs:
            raise RejectedInputError(f"stack {name!r} is empty")
        for a, b in zip(specs, specs[1:]):
            if a.out_dim != b.in_dim:
                raise RejectedInputError(f"stack {name!r}: {a.out_dim} -> {b.in_dim} does not chain")
        if len(net.weights[name]) != len(specs) or len(net.biases[name]) != len(specs):
            raise RejectedInputError(f"stack {name!r}: parameter count does not match layer count")
        for spec, w, b in zip(specs, net.weights[name], net.biases[name]):
            if w.shape != (spec.out_dim, spec.in_dim) or b.shape != (spec.out_dim,):
                raise RejectedInputError(
                    f"stack {name!r}: expected W {(spec.out_dim, spec.in_dim)} b {(spec.out_dim,)}, "
                    f"got {w.shape} {b.shape}"
                )
    heads = [net.specs[n][-1] for n in names[-2:]] if net.architecture is Architecture.DUELING else []
    if net.architecture is Architecture.PLAIN and net.specs["layers"][-1].activation is not Activation.LINEAR:
        raise RejectedInputError("final layer must be LINEAR")
    if heads:
        trunk_out = net.specs["trunk"][-1].out_dim
        value, adv = heads
        if value.out_dim != 1:
            raise RejectedInputError("value head must end in a single output")
        for head in ("value_head", "advantage_head"):
            if net.specs[head][0].in_dim != trunk_out:
                raise RejectedInputError(f"{head} input {net.specs[head][0].in_dim} != trunk output {trunk_out}")
            if net.specs[head][-1].activation is not Activation.LINEAR:
                raise RejectedInputError(f"{head} final layer must be LINEAR")


def _init_stack(specs: list[LayerSpec], rng: np.random.Generator):
    weights, biases = [], []
    for s in specs:
        bound = 1.0 / math.sqrt(s.in_dim)
        weights.append(rng.uniform(-bound, bound, size=(s.out_dim, s.in_dim)))
        biases.append(np.zeros(s.out_dim))
    return weights, biases


def _build(architecture: Architecture, specs: dict[str, list[LayerSpec]], rng: np.random.Generator):
    weights, biases = {}, {}
    for name in STACKS[architecture]:
        weights[name], biases[name] = _init_stack(specs[name], rng)
    return QNetworkParams(architecture, specs, weights, biases)


def _chain(dims, hidden=Activation.RELU, last=Activation.LINEAR) -> list[LayerSpec]:
    n = len(dims) - 1
    return [LayerSpec(dims[i], dims[i + 1], last if i == n - 1 else hidden) for i in range(n)]


def make_plain(dims, rng, hidden=Activation.RELU) -> QNetworkParams:
    """Plain net through ``dims`` (e.g. ``[30, 128, 128, 5]``), linear output."""
    return _build(Architecture.PLAIN, {"layers": _chain(dims, hidden)}, rng)


def make_dueling(trunk_dims, value_dims, advantage_dims, rng, hidden=Activation.RELU) -> QNetworkParams:
    """Dueling net. ``value_dims``/``advantage_dims`` start at the trunk output.

    The trunk's last layer uses the hidden activation since its output feeds
    both heads.
    """
    specs = {
        "trunk": _chain(trunk_dims, hidden, last=hidden),
        "value_head": _chain(value_dims, hidden),
        "advantage_head": _chain(advantage_dims, hidden),
    }
    return _build(Architecture.DUELING, specs, rng)


def default_plain(rng, obs_dim=30, n_actions=5, hidden=(128, 128)) -> QNetworkParams:
    return make_plain([obs_dim, *hidden, n_actions], rng)


def default_dueling(rng, obs_dim=30, n_actions=5, trunk=128, head=64) -> QNetworkParams:
    return make_dueling([obs_dim, trunk], [trunk, head, 1], [trunk, head, n_actions], rng)


# --- forward ----------------------------------------------------------------


def _act(z, activation):
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    if activation is Activation.TANH:
        return np.tanh(z)
    return z


def _act_grad(z, a, activation):
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if activation is Activation.TANH:
        return 1.0 - a * a
    return None


def _stack_forward(specs, weights, biases, x):
    """Batched forward through one stack. ``x`` is (B, in). Returns (inputs, pre, post)."""
    inputs, pre = [], []
    for spec, w, b in zip(specs, weights, biases):
        inputs.append(x)
        z = x @ w.T + b
        pre.append(z)
        x = _act(z, spec.activation)
    return inputs, pre, x


def _stack_backward(specs, weights, inputs, pre, out, grad_out, gw, gb):
    """Accumulate parameter grads into ``gw``/``gb``; return grad w.r.t. the stack input.

    ``inputs[i + 1]`` doubles as the post-activation of layer ``i``.
    """
    g = grad_out
    n = len(specs)
    for i in reversed(range(n)):
        post = out if i == n - 1 else inputs[i + 1]
        d = _act_grad(pre[i], post, specs[i].activation)
        if d is not None:
            g = g * d
        gw[i] += g.T @ inputs[i]
        gb[i] += g.sum(axis=0)
        g = g @ weights[i]
    return g


@dataclass
class ForwardCache:
    """Per-stack layer inputs and pre-activations from a batched forward pass."""

    stacks: dict[str, tuple] = field(default_factory=dict)
    advantages: np.ndarray | None = None
    values: np.ndarray | None = None


def _as_batch(net: QNetworkParams, states) -> np.ndarray:
    x = np.asarray(states, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise RejectedInputError(f"state dim {x.shape[-1] if x.ndim else 0} != network input {net.input_dim}")
    return x


def _run(net: QNetworkParams, x: np.ndarray):
    cache = ForwardCache()
    if net.architecture is Architecture.PLAIN:
        ins, pre, q = _stack_forward(net.specs["layers"], net.weights["layers"], net.biases["layers"], x)
        cache.stacks["layers"] = (ins, pre, q)
        return q, cache
    ins, pre, h = _stack_forward(net.specs["trunk"], net.weights["trunk"], net.biases["trunk"], x)
    cache.stacks["trunk"] = (ins, pre, h)
    for name in ("value_head", "advantage_head"):
        cache.stacks[name] = _stack_forward(net.specs[name], net.weights[name], net.biases[name], h)
    v = cache.stacks["value_head"][2]
    adv = cache.stacks["advantage_head"][2]
    cache.values, cache.advantages = v[:, 0], adv
    q = v + (adv - adv.max(axis=1, keepdims=True))
    return q, cache


def forward(net: QNetworkParams, state) -> tuple[np.ndarray, ForwardCache]:
    """Q-values for one state of a plain network, plus the activation cache."""
    if net.architecture is not Architecture.PLAIN:
        raise WrongArchitectureError("forward() takes a PLAIN network; use dueling_forward()")
    x = np.asarray(state, dtype=np.float64)
    if x.ndim != 1:
        raise RejectedInputError("forward() takes a single state vector")
    q, cache = _run(net, _as_batch(net, x))
    return q[0], cache


def dueling_forward(net: QNetworkParams, state) -> tuple[float, np.ndarray, np.ndarray]:
    """Return ``(v, advantages, q_values)`` for one state of a dueling network."""
    if net.architecture is not Architecture.DUELING:
        raise WrongArchitectureError("dueling_forward() takes a DUELING network")
    x = np.asarray(state, dtype=np.float64)
    if x.ndim != 1:
        raise RejectedInputError("dueling_forward() takes a single state vector")
    q, cache = _run(net, _as_batch(net, x))
    return float(cache.values[0]), cache.advantages[0], q[0]


def q_values(net: QNetworkParams, states) -> np.ndarray:
    """Batched Q-values, shape (B, n_actions), for either architecture."""
    q, _ = _run(net, _as_batch(net, states))
    return q


# --- loss and gradients ----------------------------------------------------


def _check_batch(net, states, actions, targets, sample_weights):
    x = _as_batch(net, states)
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if sample_weights is None:
        sample_weights = np.ones(len(targets))
    sample_weights = np.asarray(sample_weights, dtype=np.float64).reshape(-1)
    if not (len(x) == len(actions) == len(targets) == len(sample_weights)):
        raise RejectedInputError("states, actions, targets and sample_weights must have equal batch size")
    if len(x) == 0:
        raise RejectedInputError("empty batch")
    if not np.all(np.isfinite(targets)):
        raise RejectedInputError("non-finite target")
    if np.any(actions < 0) or np.any(actions >= net.n_actions):
        raise RejectedInputError("action index out of range")
    return x, actions, targets, sample_weights


def _loss(net, x, actions, targets, weights):
    q, cache = _run(net, x)
    chosen = q[np.arange(len(x)), actions]
    resid = targets - chosen
    return float(np.mean(weights * resid * resid)), q, cache, resid


def loss_and_grad(net: QNetworkParams, states, actions, targets, sample_weights=None):
    """Weighted mean squared TD loss and its exact gradient w.r.t. the network.

    ``loss = mean_j w_j * (y_j - Q(s_j, a_j))**2``. Targets are constants
    (semi-gradient), so only the chosen action's output receives gradient.
    """
    x, actions, targets, weights = _check_batch(net, states, actions, targets, sample_weights)
    loss, q, cache, resid = _loss(net, x, actions, targets, weights)
    n = len(x)
    grads = Gradients.zeros_like(net)
    gq = np.zeros_like(q)
    gq[np.arange(n), actions] = -2.0 * weights * resid / n

    if net.architecture is Architecture.PLAIN:
        ins, pre, out = cache.stacks["layers"]
        _stack_backward(net.specs["layers"], net.weights["layers"], ins, pre, out, gq,
                        grads.weights["layers"], grads.biases["layers"])
        return loss, grads

    # Q = V + A - A[argmax]; the max routes its gradient to the first argmax.
    row_sum = gq.sum(axis=1, keepdims=True)
    g_adv = gq.copy()
    g_adv[np.arange(n), np.argmax(cache.advantages, axis=1)] -= row_sum[:, 0]
    trunk_out = cache.stacks["trunk"][2]
    g_h = np.zeros_like(trunk_out)
    for name, g in (("value_head", row_sum), ("advantage_head", g_adv)):
        ins, pre, out = cache.stacks[name]
        g_h += _stack_backward(net.specs[name], net.weights[name], ins, pre, out, g,
                               grads.weights[name], grads.biases[name])
    ins, pre, out = cache.stacks["trunk"]
    _stack_backward(net.specs["trunk"], net.weights["trunk"], ins, pre, out, g_h,
                    grads.weights["trunk"], grads.biases["trunk"])
    return loss, grads


def finite_diff_grad(net: QNetworkParams, states, actions, targets, sample_weights=None, step=1e-5) -> Gradients:
    """Central-difference estimate of the ``loss_and_grad`` gradient. Test oracle only."""
    if not step > 0:
        raise RejectedInputError("step must be positive")
    x, actions, targets, weights = _check_batch(net, states, actions, targets, sample_weights)
    probe = copy_params(net)
    grads = Gradients.zeros_like(net)
    for stack in probe.stack_names:
        for params, out in ((probe.weights[stack], grads.weights[stack]), (probe.biases[stack], grads.biases[stack])):
            for p, g in zip(params, out):
                flat, gflat = p.reshape(-1), g.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + step
                    up = _loss(probe, x, actions, targets, weights)[0]
                    flat[i] = orig - step
                    down = _loss(probe, x, actions, targets, weights)[0]
                    flat[i] = orig
                    gflat[i] = (up - down) / (2.0 * step)
    return grads


# --- updates ---------------------------------------------------------------


def grad_norm(grads: Gradients) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays()))


def clip_grad_norm(grads: Gradients, max_norm: float) -> Gradients:
    """Scale ``grads`` in place so the global L2 norm is at most ``max_norm``."""
    norm = grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.arrays():
            g *= scale
    return grads


def sgd_step(net: QNetworkParams, grads: Gradients, lr: float) -> QNetworkParams:
    """Return a new network with ``p - lr * g`` for every parameter."""
    if lr < 0:
        raise RejectedInputError("learning rate must be >= 0")
    new = copy_params(net)
    for stack in net.stack_names:
        for kind in ("weights", "biases"):
            params, gs = getattr(new, kind)[stack], getattr(grads, kind).get(stack)
            if gs is None or len(gs) != len(params):
                raise RejectedInputError(f"gradient layout does not match stack {stack!r}")
            for p, g in zip(params, gs):
                if p.shape != g.shape:
                    raise RejectedInputError(f"gradient shape {g.shape} != parameter shape {p.shape}")
                p -= lr * g
    return new


def copy_params(src: QNetworkParams) -> QNetworkParams:
    return copy.deepcopy(src)
