"""Minimal dense-tensor network engine with exact reverse-mode gradients.

Feed-forward chains of linear, ReLU, and batch-normalization layers over
float64 numpy arrays. Networks are plain values: ``clone()`` yields a fully
independent copy, every operation is a deterministic function of its inputs,
and eval-mode passes never mutate state.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass
class LossValue:
    """Scalar loss averaged over ``count`` samples."""

    value: float
    count: int


class BNState:
    """Per-feature moving statistics plus the affine transform of one BN layer.

    ``momentum`` weights the previous moving value, i.e. the moving update is
    ``mean = momentum * mean + (1 - momentum) * batch_mean``.
    """

    def __init__(self, mean, var, momentum: float = 0.9, eps: float = 1e-5,
                 scale=None, shift=None):
        self.mean = np.asarray(mean, dtype=np.float64).copy()
        self.var = np.asarray(var, dtype=np.float64).copy()
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.scale = (np.ones_like(self.mean) if scale is None
                      else np.asarray(scale, dtype=np.float64).copy())
        self.shift = (np.zeros_like(self.mean) if shift is None
                      else np.asarray(shift, dtype=np.float64).copy())
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"BN momentum must lie in (0, 1), got {self.momentum}")
        if self.eps <= 0.0:
            raise ValueError(f"BN epsilon must be positive, got {self.eps}")
        if np.any(self.var < 0.0):
            raise ValueError("BN variance must be nonnegative")


class Linear:
    """Affine layer ``y = x @ weight + bias`` with weight shape (fan_in, fan_out)."""

    kind = "linear"

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64).copy()
        self.bias = np.asarray(bias, dtype=np.float64).copy()
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("linear layer needs a 2-D weight and a matching bias")


class ReLU:
    kind = "relu"


class BatchNorm:
    kind = "batchnorm"

    def __init__(self, state: BNState):
        self.state = state


class Network:
    """Ordered layer list with a contiguous block partition.

    Parameter tensors are addressed by string keys ``"<layer_index>.<name>"``.
    BN parameters, biases, and the first and last linear layers are excluded
    from pruning; ``prunable_keys()`` lists the weight tensors that remain.
    """

    def __init__(self, layers, blocks=None, n_blocks: int = 5):
        self.layers = list(layers)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if blocks is None:
            blocks = default_blocks(len(self.layers), n_blocks)
        _check_blocks(blocks, len(self.layers))
        self.blocks = {int(b): list(ix) for b, ix in sorted(blocks.items())}
        linear_ix = [i for i, l in enumerate(self.layers) if l.kind == "linear"]
        if not linear_ix:
            raise ValueError("network needs at least one linear layer")
        self._first_linear = linear_ix[0]
        self._last_linear = linear_ix[-1]
        self._prunable = tuple(f"{i}.weight" for i in linear_ix[1:-1])

    @property
    def input_dim(self) -> int:
        return self.layers[self._first_linear].weight.shape[0]

    @property
    def n_classes(self) -> int:
        return self.layers[self._last_linear].weight.shape[1]

    def params(self) -> dict[str, Array]:
        """Live references to every parameter tensor, in layer order."""
        out: dict[str, Array] = {}
        for i, layer in enumerate(self.layers):
            if layer.kind == "linear":
                out[f"{i}.weight"] = layer.weight
                out[f"{i}.bias"] = layer.bias
            elif layer.kind == "batchnorm":
                out[f"{i}.scale"] = layer.state.scale
                out[f"{i}.shift"] = layer.state.shift
        return out

    def set_param(self, key: str, value: Array) -> None:
        idx, name = key.split(".")
        layer = self.layers[int(idx)]
        target = layer.state if layer.kind == "batchnorm" else layer
        current = getattr(target, name)
        if current.shape != value.shape:
            raise ValueError(f"shape mismatch for {key}")
        setattr(target, name, np.asarray(value, dtype=np.float64).copy())

    def prunable_keys(self) -> tuple[str, ...]:
        return self._prunable

    def bn_layers(self) -> list[tuple[int, BatchNorm]]:
        return [(i, l) for i, l in enumerate(self.layers) if l.kind == "batchnorm"]

    def layer_of_key(self, key: str) -> int:
        return int(key.split(".")[0])

    def block_of_layer(self, layer_index: int) -> int:
        for b, members in self.blocks.items():
            if layer_index in members:
                return b
        raise KeyError(layer_index)

    def clone(self) -> "Network":
        return copy.deepcopy(self)


def default_blocks(n_layers: int, n_blocks: int = 5) -> dict[int, list[int]]:
    """Contiguous, equal-as-possible partition of layer indices into blocks 1..B."""
    parts = np.array_split(np.arange(n_layers), max(1, min(n_blocks, n_layers)))
    return {b + 1: part.tolist() for b, part in enumerate(parts)}


def _check_blocks(blocks, n_layers: int) -> None:
    seen: list[int] = []
    for members in blocks.values():
        members = sorted(members)
        if members and members != list(range(members[0], members[-1] + 1)):
            raise ValueError("blocks must cover contiguous layer ranges")
        seen.extend(members)
    if sorted(seen) != list(range(n_layers)):
        raise ValueError("blocks must cover every layer exactly once")


def make_mlp(in_dim: int, hidden, classes: int, *, batch_norm: bool = True,
             momentum: float = 0.9, eps: float = 1e-5, n_blocks: int = 5,
             seed: int = 0) -> Network:
    """He-initialized MLP: [Linear, BN, ReLU] per hidden width, then a Linear head."""
    rng = np.random.default_rng(seed)
    layers: list = []
    fan_in = in_dim
    for width in hidden:
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width))
        layers.append(Linear(w, np.zeros(width)))
        if batch_norm:
            layers.append(BatchNorm(BNState(np.zeros(width), np.ones(width),
                                            momentum=momentum, eps=eps)))
        layers.append(ReLU())
        fan_in = width
    w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, classes))
    layers.append(Linear(w, np.zeros(classes)))
    return Network(layers, n_blocks=n_blocks)


# ---------------------------------------------------------------------------
# Forward / backward / SGD
# ---------------------------------------------------------------------------

def forward(net: Network, batch, mode: str = "train"):
    """Run the network on a (B, d_in) batch.

    Train mode normalizes BN layers with batch statistics and advances the
    moving statistics; eval mode uses the stored statistics and mutates
    nothing. Returns ``(logits, cache)`` where the cache feeds ``backward``
    (``None`` in eval mode).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match input width "
                         f"{net.input_dim}")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ValueError("train-mode batches need at least 2 samples")
    cache: list | None = [] if train else None
    for layer in net.layers:
        if layer.kind == "linear":
            if train:
                cache.append((x,))
            x = x @ layer.weight + layer.bias
        elif layer.kind == "relu":
            if train:
                cache.append((x,))
            x = np.maximum(x, 0.0)
        else:  # batchnorm
            st = layer.state
            if train:
                mu = x.mean(axis=0)
                var = x.var(axis=0)
                inv = 1.0 / np.sqrt(var + st.eps)
                xhat = (x - mu) * inv
                st.mean = st.momentum * st.mean + (1.0 - st.momentum) * mu
                st.var = st.momentum * st.var + (1.0 - st.momentum) * var
                cache.append((xhat, inv))
                x = st.scale * xhat + st.shift
            else:
                inv = 1.0 / np.sqrt(st.var + st.eps)
                x = st.scale * ((x - st.mean) * inv) + st.shift
    return x, cache


def update_bn_stats(net: Network, batch) -> None:
    """Statistics-refresh pass: advance BN moving statistics with batch
    statistics while leaving every parameter untouched.

    Accepts batches of any size >= 1 (a singleton batch contributes zero
    variance); nothing is cached and no gradient is available.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match input width "
                         f"{net.input_dim}")
    if x.shape[0] < 1:
        raise ValueError("statistics pass needs at least 1 sample")
    for layer in net.layers:
        if layer.kind == "linear":
            x = x @ layer.weight + layer.bias
        elif layer.kind == "relu":
            x = np.maximum(x, 0.0)
        else:
            st = layer.state
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            st.mean = st.momentum * st.mean + (1.0 - st.momentum) * mu
            st.var = st.momentum * st.var + (1.0 - st.momentum) * var
            x = st.scale * ((x - mu) / np.sqrt(var + st.eps)) + st.shift


def log_softmax(logits: Array) -> Array:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: Array, labels) -> float:
    """Mean softmax cross-entropy of integer labels."""
    labels = np.asarray(labels)
    n_classes = logits.shape[1]
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ValueError("labels must be a vector matching the batch size")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(len(labels)), labels].mean())
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    return loss


def backward(net: Network, logits: Array, labels, cache):
    """Softmax cross-entropy loss and exact gradients for every parameter.

    Requires the cache of a train-mode forward on the same batch. Gradients
    are dense; any masking is the caller's concern.
    """
    if cache is None:
        raise ValueError("backward needs the cache from a train-mode forward")
    if len(cache) != len(net.layers):
        raise ValueError("cache does not match this network")
    labels = np.asarray(labels)
    n = logits.shape[0]
    n_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")

    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    delta = np.exp(logp)
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: dict[str, Array] = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.kind == "linear":
            (x,) = cache[i]
            grads[f"{i}.weight"] = x.T @ delta
            grads[f"{i}.bias"] = delta.sum(axis=0)
            delta = delta @ layer.weight.T
        elif layer.kind == "relu":
            (x,) = cache[i]
            delta = delta * (x > 0.0)
        else:
            xhat, inv = cache[i]
            st = layer.state
            grads[f"{i}.scale"] = (delta * xhat).sum(axis=0)
            grads[f"{i}.shift"] = delta.sum(axis=0)
            dxhat = delta * st.scale
            b = xhat.shape[0]
            delta = (inv / b) * (b * dxhat - dxhat.sum(axis=0)
                                 - xhat * (dxhat * xhat).sum(axis=0))
    return LossValue(loss, n), grads


def sgd_step(net: Network, grads: dict[str, Array], lr: float,
             mask=None) -> Network:
    """In-place SGD update: masked tensors follow ``p -= lr * (g * m)`` and
    keep masked coordinates exactly zero; unmasked tensors update densely."""
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    slices = getattr(mask, "slices", mask) or {}
    for key, p in net.params().items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {key}")
        m = slices.get(key)
        if m is None:
            p -= lr * g
        else:
            p -= lr * (g * m)
            p[m == 0] = 0.0
    return net
