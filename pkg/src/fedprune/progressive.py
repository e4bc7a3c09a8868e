"""Progressive grow/prune adjustment with bounded-memory gradient buffers.

Clients stream the gradients of pruned coordinates through a capacity-``a``
min-magnitude-evicting buffer, the server aggregates the surviving entries,
grows the pruned coordinates with the largest aggregated gradient magnitude,
and prunes the same number of unpruned coordinates with the smallest weight
magnitude. Density is conserved exactly by every adjustment.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .nn import Array, Network

GRANULARITIES = ("layer", "block", "entire")
ORDERS = ("backward", "forward")


@dataclass
class PruneSchedule:
    granularity: str = "block"
    order: str = "backward"
    interval: int = 10          # fine-tuning rounds between two prunes
    stop_round: int = 100       # last round on which pruning may happen
    growth_fraction: float = 0.15

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if self.interval < 1:
            raise ValueError("pruning interval must be positive")
        if self.stop_round < self.interval:
            raise ValueError("stop round must be at least one interval")
        if not 0.0 < self.growth_fraction < 1.0:
            raise ValueError("growth fraction must lie in (0, 1)")


class TopKBuffer:
    """Bounded store of the ``capacity`` largest-magnitude gradients seen.

    Streaming semantics: when full, an incoming gradient replaces the current
    smallest-magnitude entry only if it beats it; magnitude ties are resolved
    toward the lower flat index. ``peak_size`` instruments the memory bound.
    """

    __slots__ = ("capacity", "_heap", "peak_size")

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("buffer capacity must be nonnegative")
        self.capacity = capacity
        self._heap: list[tuple[float, int, float]] = []  # (|g|, -idx, g)
        self.peak_size = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, index: int, value: float) -> None:
        if self.capacity == 0:
            return
        item = (abs(value), -index, value)
        if len(self._heap) < self.capacity:
            heapq.heappush(self._heap, item)
        elif item > self._heap[0]:
            heapq.heapreplace(self._heap, item)
        self.peak_size = max(self.peak_size, len(self._heap))

    def entries(self) -> list[tuple[int, float]]:
        """(index, gradient) pairs ordered by |gradient| descending, magnitude
        ties by lower index first."""
        ordered = sorted(self._heap, reverse=True)
        return [(-neg_idx, g) for _, neg_idx, g in ordered]


def topk_collect(indices, values, capacity: int) -> TopKBuffer:
    """Stream (index, gradient) pairs through a bounded buffer."""
    buf = TopKBuffer(capacity)
    for idx, val in zip(indices, values):
        buf.push(int(idx), float(val))
    return buf


def pruning_number(t: int, schedule: PruneSchedule, local_iters: int,
                   n_unpruned: int, n_pruned: int | None = None,
                   targeted: bool = True) -> int:
    """Cosine-decayed adjustment size for one layer at iteration ``t``:
    floor(beta * (1 + cos(t * pi / (stop_round * iters))) * n_unpruned),
    zero for untargeted layers or past the stop point, clamped so that the
    layer has enough pruned and unpruned coordinates to swap."""
    if t < 0:
        raise ValueError("iteration must be nonnegative")
    horizon = schedule.stop_round * local_iters
    if not targeted or t > horizon:
        return 0
    raw = math.floor(schedule.growth_fraction
                     * (1.0 + math.cos(t * math.pi / horizon)) * n_unpruned)
    capped = min(raw, n_unpruned)
    if n_pruned is not None:
        capped = min(capped, n_pruned)
    return max(0, capped)


def aggregate_topk(buffers: list[TopKBuffer],
                   weights: list[float]) -> dict[int, float]:
    """Client-size-weighted sum over the union of reported indices; an index
    a client did not report contributes zero for that client."""
    if not buffers:
        raise ValueError("need at least one buffer")
    if len(buffers) != len(weights):
        raise ValueError("one weight per buffer required")
    total = float(sum(weights))
    out: dict[int, float] = {}
    for buf, w in zip(buffers, weights):
        share = w / total
        for idx, g in buf.entries():
            out[idx] = out.get(idx, 0.0) + share * g
    return out


@dataclass
class GrowPrunePlan:
    """Index sets for one layer: grow flips mask 0 -> 1, drop flips 1 -> 0."""

    grow: list[int] = field(default_factory=list)
    drop: list[int] = field(default_factory=list)
    shortfall: int = 0  # grow slots filled without a reported gradient

    def __post_init__(self):
        if len(self.grow) != len(self.drop):
            raise ValueError("grow and drop sets must have equal size")
        if set(self.grow) & set(self.drop):
            raise ValueError("grow and drop sets must be disjoint")


def plan_grow_prune(agg_grads: dict[int, float], mask_slice: Array,
                    weight_slice: Array, count: int) -> GrowPrunePlan:
    """Choose ``count`` pruned coordinates to grow (largest aggregated
    gradient magnitude) and ``count`` unpruned coordinates to drop (smallest
    weight magnitude, never a just-grown coordinate). Ties go to the lower
    flat index. If fewer than ``count`` pruned coordinates were reported, the
    remainder is filled with the lowest pruned indices and flagged."""
    flat_mask = mask_slice.reshape(-1)
    pruned = np.flatnonzero(flat_mask == 0)
    unpruned = np.flatnonzero(flat_mask == 1)
    if count > min(len(pruned), len(unpruned)):
        raise ValueError(f"cannot swap {count} coordinates in a layer with "
                         f"{len(pruned)} pruned / {len(unpruned)} unpruned")
    if count == 0:
        return GrowPrunePlan()

    pruned_set = set(pruned.tolist())
    reported = [(idx, g) for idx, g in agg_grads.items() if idx in pruned_set]
    reported.sort(key=lambda item: (-abs(item[1]), item[0]))
    grow = [idx for idx, _ in reported[:count]]
    shortfall = count - len(grow)
    if shortfall > 0:
        chosen = set(grow)
        for idx in pruned:
            if len(grow) == count:
                break
            if int(idx) not in chosen:
                grow.append(int(idx))

    flat_w = np.abs(weight_slice.reshape(-1)[unpruned])
    order = np.argsort(flat_w, kind="stable")
    drop = unpruned[order[:count]].tolist()
    return GrowPrunePlan(grow=[int(i) for i in grow],
                         drop=[int(i) for i in drop],
                         shortfall=shortfall)


def apply_plan(mask_slice: Array, plan: GrowPrunePlan,
               weight_slice: Array) -> tuple[Array, Array]:
    """Flip the plan into a fresh (mask, weights) pair: grown coordinates are
    zero-initialized, dropped coordinates are zeroed, and the nonzero count
    is exactly conserved."""
    mask = mask_slice.copy()
    weights = weight_slice.copy()
    flat_mask = mask.reshape(-1)
    flat_w = weights.reshape(-1)
    if any(flat_mask[i] != 0 for i in plan.grow):
        raise ValueError("plan grows a coordinate that is not pruned")
    if any(flat_mask[i] != 1 for i in plan.drop):
        raise ValueError("plan drops a coordinate that is not unpruned")
    flat_mask[plan.grow] = 1
    flat_w[plan.grow] = 0.0
    flat_mask[plan.drop] = 0
    flat_w[plan.drop] = 0.0
    return mask, weights


def eligible_layer_order(net: Network, order: str) -> list[str]:
    keys = list(net.prunable_keys())
    return list(reversed(keys)) if order == "backward" else keys


def target_layers(round_index: int, schedule: PruneSchedule,
                  net: Network) -> list[str]:
    """Prunable parameter keys adjusted in this round.

    Pruning happens on rounds that are multiples of the interval, up to and
    including the stop round. Block granularity cycles through the network's
    block partition (backward = highest block first); layer granularity
    cycles through the eligible layers one at a time; entire targets all of
    them every pruning round.
    """
    if round_index < 1:
        raise ValueError("rounds are 1-based")
    if round_index % schedule.interval != 0 or round_index > schedule.stop_round:
        return []
    ordinal = round_index // schedule.interval - 1  # 0-based pruning counter
    if schedule.granularity == "entire":
        return list(net.prunable_keys())
    if schedule.granularity == "layer":
        ordered = eligible_layer_order(net, schedule.order)
        if not ordered:
            return []
        return [ordered[ordinal % len(ordered)]]
    block_ids = sorted(net.blocks)
    if schedule.order == "backward":
        block_ids = list(reversed(block_ids))
    block = block_ids[ordinal % len(block_ids)]
    members = set(net.blocks[block])
    return [key for key in net.prunable_keys()
            if net.layer_of_key(key) in members]
