"""Small dense networks with analytic gradients, RMSProp and checkpoints.

Everything runs in float64.  Inputs are either a single vector or a batch of
row vectors; gradients of a batch are summed over its rows.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CheckpointCorruptError,
    CheckpointFormatError,
    ContractViolationError,
    ShapeError,
    TrainingDivergenceError,
    UnsupportedVersionError,
)

__all__ = [
    "ACTIVATIONS",
    "DenseLayer",
    "Mlp",
    "ForwardCache",
    "RmsPropState",
    "forward",
    "backward",
    "rmsprop_step",
    "init_weights",
    "build_mlp",
    "build_actor",
    "build_critic",
    "build_state_value",
    "state_dim",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]

ACTIVATIONS = ("identity", "relu", "tanh", "softmax")

CHECKPOINT_MAGIC = b"DRLMCKPT"
CHECKPOINT_VERSION = 1

_ids = count()


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError("biases must match the weight rows")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(eq=False)
class Mlp:
    layers: list[DenseLayer]
    l2_coeff: float = 0.0
    version: int = field(default=0, compare=False)
    uid: int = field(default_factory=lambda: next(_ids), compare=False)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer sizes do not chain: {a.out_dim} -> {b.in_dim}")
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise ShapeError("softmax is only allowed on the output layer")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays ``[W0, b0, W1, b1, ...]``; mutate in place only via ``touch``."""
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.biases)
        return params

    def touch(self) -> None:
        """Mark the parameters as changed, invalidating earlier caches."""
        self.version += 1

    def l2_norm_sq(self) -> float:
        return float(sum(np.sum(p * p) for p in self.parameters()))

    def copy(self) -> "Mlp":
        layers = [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation)
                  for l in self.layers]
        return Mlp(layers, self.l2_coeff)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


@dataclass
class ForwardCache:
    net_uid: int
    version: int
    activations: list[np.ndarray]  # input followed by every layer output, all 2-D
    single: bool


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        return _softmax(z)
    return z


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Affine-then-activation chain; returns the output and a cache for ``backward``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ShapeError(f"expected input width {net.in_dim}, got shape {x.shape}")
    acts = [a]
    for layer in net.layers:
        a = _activate(a @ layer.weights.T + layer.biases, layer.activation)
        acts.append(a)
    out = a[0] if single else a
    return out, ForwardCache(net.uid, net.version, acts, single)


Gradients = list  # [(dW, db), ...] per layer


def backward(net: Mlp, cache: ForwardCache, output_grad: np.ndarray,
             wrt: str = "output") -> Gradients:
    """Reverse-mode pass through the chain.

    ``wrt="logits"`` treats ``output_grad`` as the gradient with respect to the
    last layer's pre-activation, which is how softmax/cross-entropy heads are
    fed (e.g. ``p_hat - target``).
    """
    if cache.net_uid != net.uid or cache.version != net.version:
        raise ContractViolationError("forward cache does not belong to this network state")
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.activations[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} does not match the output")
    grads: Gradients = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        out = cache.activations[i + 1]
        if i == len(net.layers) - 1 and wrt == "logits":
            gz = g
        elif layer.activation == "relu":
            gz = g * (out > 0.0)
        elif layer.activation == "tanh":
            gz = g * (1.0 - out * out)
        elif layer.activation == "softmax":
            gz = out * (g - np.sum(g * out, axis=-1, keepdims=True))
        else:
            gz = g
        a_prev = cache.activations[i]
        grads[i] = (gz.T @ a_prev, gz.sum(axis=0))
        if i > 0:
            g = gz @ layer.weights
    return grads


def add_l2(net: Mlp, grads: Gradients, coeff: float | None = None) -> Gradients:
    """Add the gradient of ``coeff * ||theta||^2`` (all weights and biases)."""
    c = net.l2_coeff if coeff is None else coeff
    return [(dW + 2.0 * c * l.weights, db + 2.0 * c * l.biases)
            for (dW, db), l in zip(grads, net.layers)]


def flatten_grads(grads: Gradients) -> list[np.ndarray]:
    out = []
    for dW, db in grads:
        out.append(dW)
        out.append(db)
    return out


@dataclass
class RmsPropState:
    mean_square: list[np.ndarray]
    learning_rate: float = 1e-4
    decay_rho: float = 0.9
    epsilon_stab: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], learning_rate: float = 1e-4,
                   decay_rho: float = 0.9, epsilon_stab: float = 1e-8) -> "RmsPropState":
        return cls([np.zeros_like(p) for p in params], learning_rate, decay_rho, epsilon_stab)


def rmsprop_step(opt: RmsPropState, params: list[np.ndarray],
                 grads: Sequence[np.ndarray]) -> list[np.ndarray]:
    """In-place RMSProp update; returns ``params``."""
    if len(params) != len(grads) or len(params) != len(opt.mean_square):
        raise ShapeError("parameter, gradient and accumulator lists differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError("non-finite gradient")
    rho, lr, eps = opt.decay_rho, opt.learning_rate, opt.epsilon_stab
    for p, g, ms in zip(params, grads, opt.mean_square):
        if p.shape != g.shape or ms.shape != p.shape:
            raise ShapeError("parameter and gradient shapes differ")
        ms *= rho
        ms += (1.0 - rho) * g * g
        p -= lr * g / np.sqrt(ms + eps)
    return params


def init_weights(net: Mlp, seed: int) -> Mlp:
    """Fan-based uniform weights, zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        fan_out, fan_in = layer.weights.shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        layer.weights[...] = rng.uniform(-bound, bound, size=layer.weights.shape)
        layer.biases[...] = 0.0
    net.touch()
    return net


def build_mlp(sizes: Sequence[int], activations: Sequence[str], l2_coeff: float = 0.0) -> Mlp:
    if len(activations) != len(sizes) - 1:
        raise ShapeError("need one activation per layer")
    layers = [DenseLayer(np.zeros((o, i)), np.zeros(o), act)
              for i, o, act in zip(sizes[:-1], sizes[1:], activations)]
    return Mlp(layers, l2_coeff)


def state_dim(m: int, n: int) -> int:
    return 4 * m + n + 2


def _hidden(m: int, n: int, n_t: int) -> list[int]:
    return [state_dim(m, n)] + [8 * n_t] * 5


def build_actor(m: int, n: int, n_t: int, n_actions: int, l2_coeff: float = 0.0) -> Mlp:
    sizes = [state_dim(m, n)] + _hidden(m, n, n_t) + [n_actions]
    return build_mlp(sizes, ["relu"] * 6 + ["softmax"], l2_coeff)


def build_critic(m: int, n: int, n_t: int, l2_coeff: float = 0.0) -> Mlp:
    sizes = [state_dim(m, n)] + _hidden(m, n, n_t) + [1]
    return build_mlp(sizes, ["tanh"] * 7, l2_coeff)


def build_state_value(m: int, n: int, n_t: int, n_actions: int, l2_coeff: float = 0.0) -> Mlp:
    sizes = [state_dim(m, n) + n_actions] + _hidden(m, n, n_t) + [1]
    return build_mlp(sizes, ["tanh"] * 7, l2_coeff)


# -- checkpoints --------------------------------------------------------------
#
# magic(8) | version u32 | network count u32
# per network: layer count u32, then per layer rows u32, cols u32, activation u8
# then, network by network and layer by layer: weights (row-major) and biases
# as little-endian float64.

def save_checkpoint(nets: Sequence[Mlp], path) -> None:
    header = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(nets))]
    body = []
    for net in nets:
        header.append(struct.pack("<I", len(net.layers)))
        for layer in net.layers:
            rows, cols = layer.weights.shape
            header.append(struct.pack("<IIB", rows, cols, ACTIVATIONS.index(layer.activation)))
            body.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            body.append(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(header + body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointCorruptError("checkpoint file is truncated")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> list[Mlp]:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    version, n_nets = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}")
    shapes = []
    for _ in range(n_nets):
        (n_layers,) = reader.unpack("<I")
        layer_shapes = []
        for _ in range(n_layers):
            rows, cols, tag = reader.unpack("<IIB")
            if tag >= len(ACTIVATIONS):
                raise CheckpointCorruptError(f"unknown activation tag {tag}")
            layer_shapes.append((rows, cols, ACTIVATIONS[tag]))
        shapes.append(layer_shapes)
    nets = []
    for layer_shapes in shapes:
        layers = []
        for rows, cols, act in layer_shapes:
            W = np.frombuffer(reader.take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
            b = np.frombuffer(reader.take(8 * rows), dtype="<f8")
            layers.append(DenseLayer(W.astype(np.float64), b.astype(np.float64), act))
        try:
            nets.append(Mlp(layers))
        except ShapeError as exc:
            raise CheckpointCorruptError(str(exc)) from exc
    if reader.pos != len(reader.data):
        raise CheckpointCorruptError("trailing bytes after the last network")
    return nets
