"""Storage, memory-footprint, and training-FLOPs accounting.

Sparse position encodings are selected by density band:

    dense   d in [0.9, 1]     s = n*b
    bitmap  d in [0.3, 0.9)   o = n,                              s = o + m*b
    coo     d in [0.1, 0.3)   o = m*ceil(log2 n),                 s = o + m*b
    csr/csc d in [0, 0.1)     o = m*ceil(log2 n_c) + n_r*ceil(log2 m),
                              s = o + m*b   (cheaper orientation wins)

All storage is tracked in bits internally; reports expose bytes (bits / 8)
and MB (1e6 bytes). ceil(log2 m) follows the convention that m <= 1 costs 0
bits, so an empty tensor costs exactly its fixed index structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nn import Array, Network

SCHEME_DENSE = "dense"
SCHEME_BITMAP = "bitmap"
SCHEME_COO = "coo"
SCHEME_CSR = "csr"

ALG_DENSE = "dense"              # dense training end to end
ALG_STATIC_SPARSE = "static_sparse"  # fixed sparse model
ALG_DENSE_SCORES = "prunefl"     # sparse model, dense importance scores
ALG_PROGRESSIVE = "fedtiny"      # sparse model, bounded top-k adjustment

ALGORITHM_TAGS = (ALG_DENSE, ALG_STATIC_SPARSE, ALG_DENSE_SCORES,
                  ALG_PROGRESSIVE)


def ceil_log2(x: int) -> int:
    """Smallest k with 2**k >= x; zero for x <= 1."""
    return 0 if x <= 1 else int(x - 1).bit_length()


def choose_scheme(d: float) -> str:
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {d}")
    if d >= 0.9:
        return SCHEME_DENSE
    if d >= 0.3:
        return SCHEME_BITMAP
    if d >= 0.1:
        return SCHEME_COO
    return SCHEME_CSR


@dataclass
class StorageEntry:
    scheme: str
    position_bits: int
    total_bits: int

    def to_record(self) -> dict:
        return {"scheme": self.scheme, "bits": self.total_bits,
                "bytes": self.total_bits / 8.0}


def storage_bits(n: int, n_r: int, n_c: int, m: int, b: int) -> StorageEntry:
    """Bits to store m nonzeros of an n-element (n_r x n_c) tensor at value
    bit-width b, under the scheme its density selects."""
    if m > n or n != n_r * n_c:
        raise ValueError("need m <= n and n == n_r * n_c")
    if b < 1:
        raise ValueError("bit width must be at least 1")
    scheme = choose_scheme(m / n)
    if scheme == SCHEME_DENSE:
        return StorageEntry(scheme, 0, n * b)
    if scheme == SCHEME_BITMAP:
        o = n
    elif scheme == SCHEME_COO:
        o = m * ceil_log2(n)
    else:
        o_csr = m * ceil_log2(n_c) + n_r * ceil_log2(m)
        o_csc = m * ceil_log2(n_r) + n_c * ceil_log2(m)
        o = min(o_csr, o_csc)
    return StorageEntry(scheme, o, o + m * b)


@dataclass
class StorageReport:
    entries: dict[str, StorageEntry]
    total_bits: int

    @property
    def total_bytes(self) -> float:
        return self.total_bits / 8.0

    @property
    def total_mb(self) -> float:
        return self.total_bits / 8.0 / 1e6

    def to_record(self) -> dict:
        return {"bits": self.total_bits, "bytes": self.total_bytes,
                "mb": self.total_mb,
                "tensors": {k: e.to_record() for k, e in self.entries.items()}}


def _compressed_dims(shape: tuple) -> tuple[int, int]:
    """The two longest extents form the compressed matrix; any remaining
    extents just multiply the element count."""
    if len(shape) == 0:
        return 1, 1
    if len(shape) == 1:
        return 1, int(shape[0])
    longest = sorted(shape, reverse=True)[:2]
    return int(longest[0]), int(longest[1])


def model_storage(net: Network, mask=None, bits: int = 32) -> StorageReport:
    """Per-tensor scheme selection over every parameter tensor; tensors
    without a mask slice are dense."""
    slices = getattr(mask, "slices", mask) or {}
    entries: dict[str, StorageEntry] = {}
    total = 0
    for key, p in net.params().items():
        n = p.size
        m = int(slices[key].sum()) if key in slices else n
        n_r, n_c = _compressed_dims(p.shape)
        if len(p.shape) > 2:
            extra = n // (n_r * n_c)
            n_c *= extra  # fold the remaining extents into the column count
        entry = storage_bits(n, n_r, n_c, m, bits)
        entries[key] = entry
        total += entry.total_bits
    return StorageReport(entries, total)


def dense_param_bytes(net: Network, bits: int = 32) -> float:
    return sum(p.size for p in net.params().values()) * bits / 8.0


# ---------------------------------------------------------------------------
# FLOPs
# ---------------------------------------------------------------------------

def forward_flops(net: Network, mask=None, batch: int = 1) -> float:
    """One forward pass: 2 * nonzero-weights * batch per linear layer plus
    batch * width per activation; batch normalization and the loss cost 0."""
    if batch < 1:
        raise ValueError("batch size must be at least 1")
    slices = getattr(mask, "slices", mask) or {}
    total = 0.0
    for i, layer in enumerate(net.layers):
        if layer.kind == "linear":
            key = f"{i}.weight"
            m = int(slices[key].sum()) if key in slices else layer.weight.size
            total += 2.0 * m * batch
        elif layer.kind == "relu":
            width = _layer_width(net, i)
            total += float(batch * width)
    return total


def _layer_width(net: Network, index: int) -> int:
    for j in range(index, -1, -1):
        if net.layers[j].kind == "linear":
            return net.layers[j].weight.shape[1]
    return net.input_dim


def collection_pass_flops(net: Network, mask, targeted: list[str],
                          batch: int) -> float:
    """FLOPs of the extra gradient-collection pass on a pruning round: one
    sparse forward, activation-gradient propagation back to the earliest
    targeted layer, and a dense weight-gradient for each targeted layer."""
    if not targeted:
        return 0.0
    slices = getattr(mask, "slices", mask) or {}
    targeted_ix = sorted(net.layer_of_key(k) for k in targeted)
    earliest = targeted_ix[0]
    total = forward_flops(net, mask, batch)
    for i in range(len(net.layers) - 1, earliest - 1, -1):
        layer = net.layers[i]
        if layer.kind == "linear":
            if i in targeted_ix:
                total += 2.0 * layer.weight.size * batch  # dense dW
            if i > earliest:
                key = f"{i}.weight"
                m = (int(slices[key].sum()) if key in slices
                     else layer.weight.size)
                total += 2.0 * m * batch  # input-gradient propagation
        elif layer.kind == "relu" and i > earliest:
            total += float(batch * _layer_width(net, i))
    return total


@dataclass
class FlopsReport:
    algorithm: str
    dense_forward: float
    sparse_forward: float
    local_iters: int
    peak: float

    def to_record(self) -> dict:
        return {"algorithm": self.algorithm, "dense_forward": self.dense_forward,
                "sparse_forward": self.sparse_forward,
                "local_iters": self.local_iters, "flops_peak": self.peak}


def round_peak_flops(algorithm: str, dense_forward: float,
                     sparse_forward: float, local_iters: int,
                     extra: float = 0.0) -> float:
    """Per-round peak training FLOPs on one client, with backward costed at
    twice the forward pass:

        dense          3 * F_d * E
        static_sparse  3 * F_s * E
        prunefl        (2 * F_s + F_d) * E
        fedtiny        3 * F_s * E + X   (X = measured collection-pass cost)
    """
    if min(dense_forward, sparse_forward, local_iters, extra) < 0:
        raise ValueError("inputs must be nonnegative")
    if algorithm == ALG_DENSE:
        return 3.0 * dense_forward * local_iters
    if algorithm == ALG_STATIC_SPARSE:
        return 3.0 * sparse_forward * local_iters
    if algorithm == ALG_DENSE_SCORES:
        return (2.0 * sparse_forward + dense_forward) * local_iters
    if algorithm == ALG_PROGRESSIVE:
        return 3.0 * sparse_forward * local_iters + extra
    raise ValueError(f"unknown algorithm tag {algorithm!r}")


# ---------------------------------------------------------------------------
# Training memory
# ---------------------------------------------------------------------------

def activation_bytes(net: Network, batch: int, bits: int = 32) -> float:
    """Bytes held by the activations of one forward pass (input included);
    gradient-of-activation memory is taken equal to this."""
    if batch < 1:
        raise ValueError("batch size must be at least 1")
    values = net.input_dim
    for i, layer in enumerate(net.layers):
        if layer.kind == "linear":
            values += layer.weight.shape[1]
        else:
            values += _layer_width(net, i)
    return values * batch * bits / 8.0


def measure_activation_bytes(net: Network, batch_sizes, bits: int = 32) -> float:
    """Maximum activation memory over several measured batch sizes."""
    sizes = list(batch_sizes)
    if not sizes:
        raise ValueError("need at least one measurement")
    return max(activation_bytes(net, b, bits) for b in sizes)


@dataclass
class MemoryReport:
    algorithm: str
    param_dense: float
    param_sparse: float
    activations: float
    total: float

    def to_record(self) -> dict:
        return {"algorithm": self.algorithm, "param_dense": self.param_dense,
                "param_sparse": self.param_sparse,
                "activations": self.activations, "memory_total": self.total}


def training_memory(algorithm: str, param_dense: float, param_sparse: float,
                    activations: float, bits: int = 32,
                    topk_total: int = 0) -> MemoryReport:
    """Training footprint in bytes per algorithm family:

        dense          2*Mp_d + 2*Ma
        static_sparse  2*Mp_s + 2*Ma
        prunefl        Mp_d + Mp_s + 2*Ma
        fedtiny        2*Mp_s + 2*Ma + 3*(b/8)*sum_l a_l
    """
    if min(param_dense, param_sparse, activations, topk_total) < 0:
        raise ValueError("inputs must be nonnegative")
    if algorithm == ALG_DENSE:
        total = 2.0 * param_dense + 2.0 * activations
    elif algorithm == ALG_STATIC_SPARSE:
        total = 2.0 * param_sparse + 2.0 * activations
    elif algorithm == ALG_DENSE_SCORES:
        total = param_dense + param_sparse + 2.0 * activations
    elif algorithm == ALG_PROGRESSIVE:
        total = (2.0 * param_sparse + 2.0 * activations
                 + 3.0 * (bits / 8.0) * topk_total)
    else:
        raise ValueError(f"unknown algorithm tag {algorithm!r}")
    return MemoryReport(algorithm, param_dense, param_sparse, activations,
                        total)


def reports_to_json(storage: StorageReport, memory: list[MemoryReport],
                    flops: list[FlopsReport]) -> str:
    return json.dumps({
        "storage": storage.to_record(),
        "memory": [m.to_record() for m in memory],
        "flops": [f.to_record() for f in flops],
    }, indent=2, sort_keys=True)
