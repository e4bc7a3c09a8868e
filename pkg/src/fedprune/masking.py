"""Binary masks, density accounting, and coarse-pruning strategies.

Densities entered as decimals (0.01, 0.05, ...) are honored exactly: keep
counts and feasibility checks go through ``Decimal(repr(d))`` so that float
representation error can never round a count the wrong way.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_CEILING, Decimal
from fractions import Fraction

import numpy as np

from .nn import Array, Network

MIN_KEPT_PER_LAYER = 10   # floor that keeps every pruned layer connected
POOL_ATTEMPTS = 100
RESCALE_STEPS = 600


def keep_count(density: float, n: int) -> int:
    """ceil(density * n) evaluated on the decimal the float was written as."""
    if density <= 0.0:
        return 0
    if density >= 1.0:
        return n
    exact = Decimal(repr(float(density))) * n
    return int(exact.to_integral_value(rounding=ROUND_CEILING))


def density_within(kept: int, total: int, target: float) -> bool:
    """Exact test of kept/total <= target."""
    return Fraction(kept, total) <= Fraction(Decimal(repr(float(target))))


@dataclass
class Mask:
    """Binary indicators over the prune-eligible parameter tensors."""

    slices: dict[str, Array]

    def __post_init__(self):
        for key, m in self.slices.items():
            m = np.asarray(m, dtype=np.uint8)
            if not np.all((m == 0) | (m == 1)):
                raise ValueError(f"mask entries for {key} must be 0 or 1")
            self.slices[key] = m

    def nonzeros(self) -> dict[str, int]:
        return {k: int(m.sum()) for k, m in self.slices.items()}

    def counts(self) -> tuple[int, int]:
        kept = sum(int(m.sum()) for m in self.slices.values())
        total = sum(m.size for m in self.slices.values())
        return kept, total

    def density(self) -> float:
        kept, total = self.counts()
        return kept / total if total else 1.0

    def layer_density(self, key: str) -> float:
        m = self.slices[key]
        return float(m.sum()) / m.size

    def copy(self) -> "Mask":
        return Mask({k: m.copy() for k, m in self.slices.items()})


def density(mask: Mask) -> float:
    return mask.density()


@dataclass
class Candidate:
    """One coarse-pruned model: requested per-layer densities plus the mask
    they produced."""

    id: int
    layer_densities: dict[str, float]
    mask: Mask
    density: float


def magnitude_prune_layer(weights: Array, layer_density: float) -> Array:
    """Keep the ceil(d * n) largest-magnitude entries; ties keep the lower
    flat index. Returns a uint8 mask of the same shape."""
    if not 0.0 <= layer_density <= 1.0:
        raise ValueError(f"layer density must lie in [0, 1], got {layer_density}")
    k = keep_count(layer_density, weights.size)
    mask = np.zeros(weights.size, dtype=np.uint8)
    if k > 0:
        order = np.argsort(-np.abs(weights).reshape(-1), kind="stable")
        mask[order[:k]] = 1
    return mask.reshape(weights.shape)


def random_mask(shapes: dict[str, tuple], mask_density: float,
                seed: int = 0) -> Mask:
    """Uniformly random support of exactly ceil(d * n) entries per layer."""
    if not 0.0 < mask_density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {mask_density}")
    rng = np.random.default_rng(seed)
    slices = {}
    for key in shapes:
        shape = shapes[key]
        n = int(np.prod(shape))
        k = keep_count(mask_density, n)
        m = np.zeros(n, dtype=np.uint8)
        m[rng.choice(n, size=k, replace=False)] = 1
        slices[key] = m.reshape(shape)
    return Mask(slices)


def apply_mask(net: Network, mask: Mask) -> Network:
    """Clone the network with masked-out weights set to exactly zero."""
    out = net.clone()
    params = out.params()
    for key, m in mask.slices.items():
        params[key][m == 0] = 0.0
    return out


def magnitude_mask(net: Network, d_target: float) -> Mask:
    """One-shot server-side magnitude mask at uniform per-layer density,
    rescaled just enough to keep total density <= d_target."""
    sizes = {k: net.params()[k].size for k in net.prunable_keys()}
    if not sizes:
        raise ValueError("network has no prunable tensors")
    requested = {k: min(1.0, d_target) for k in sizes}
    densities = _feasible_densities(requested, sizes, d_target)
    slices = {k: magnitude_prune_layer(net.params()[k], densities[k])
              for k in sizes}
    return Mask(slices)


def feasible_random_mask(net: Network, d_target: float, seed: int = 0) -> Mask:
    """Random mask at uniform per-layer density, rescaled to meet d_target."""
    sizes = {k: net.params()[k].size for k in net.prunable_keys()}
    if not sizes:
        raise ValueError("network has no prunable tensors")
    requested = {k: min(1.0, d_target) for k in sizes}
    densities = _feasible_densities(requested, sizes, d_target)
    rng = np.random.default_rng(seed)
    slices = {}
    for key, n in sizes.items():
        k = keep_count(densities[key], n)
        m = np.zeros(n, dtype=np.uint8)
        m[rng.choice(n, size=k, replace=False)] = 1
        slices[key] = m.reshape(net.params()[key].shape)
    return Mask(slices)


def _total_kept(densities: dict[str, float], sizes: dict[str, int]) -> int:
    return sum(keep_count(densities[k], sizes[k]) for k in sizes)


def _feasible_densities(requested: dict[str, float], sizes: dict[str, int],
                        d_target: float) -> dict[str, float]:
    """Scale a requested density vector down until the realized keep counts
    fit the target budget. Raises if even the per-layer floors do not fit."""
    total = sum(sizes.values())
    if density_within(_total_kept(requested, sizes), total, d_target):
        return dict(requested)
    floors = {k: min(1.0, MIN_KEPT_PER_LAYER / sizes[k]) for k in sizes}
    scale = 1.0
    for _ in range(RESCALE_STEPS):
        scale *= 0.97
        scaled = {k: min(1.0, max(requested[k] * scale, floors[k]))
                  for k in sizes}
        if density_within(_total_kept(scaled, sizes), total, d_target):
            return scaled
    raise ValueError(
        f"cannot reach total density {d_target} with at least "
        f"{MIN_KEPT_PER_LAYER} kept weights per layer")


def generate_candidate_pool(net: Network, d_target: float, count: int,
                            noise: float = 0.5, seed: int = 0,
                            max_attempts: int = POOL_ATTEMPTS,
                            rescale: bool = True) -> list[Candidate]:
    """Uniform-noise candidate pool: per-layer densities d_target + e with
    e ~ U[-noise * d_target, +noise * d_target], magnitude-pruned, accepted
    only when the total density stays within d_target.

    Rejected draws are resampled up to ``max_attempts`` times per candidate;
    after that the latest draw is rescaled into feasibility (or, with
    ``rescale=False``, the pool generation fails).
    """
    if count < 1:
        raise ValueError("pool size must be at least 1")
    if not 0.0 < d_target <= 1.0:
        raise ValueError(f"target density must lie in (0, 1], got {d_target}")
    if noise < 0.0:
        raise ValueError("noise scale must be nonnegative")
    keys = net.prunable_keys()
    if not keys:
        raise ValueError("network has no prunable tensors")
    params = net.params()
    sizes = {k: params[k].size for k in keys}
    total = sum(sizes.values())
    floors = {k: min(1.0, MIN_KEPT_PER_LAYER / sizes[k]) for k in keys}

    pool = []
    for cid in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, cid)))
        densities = None
        draw = {}
        for _ in range(max_attempts):
            e = rng.uniform(-noise * d_target, noise * d_target, size=len(keys))
            draw = {k: min(1.0, max(d_target + e[i], floors[k]))
                    for i, k in enumerate(keys)}
            if density_within(_total_kept(draw, sizes), total, d_target):
                densities = draw
                break
        if densities is None:
            if not rescale:
                raise ValueError(
                    f"candidate {cid}: no feasible draw in {max_attempts} "
                    "attempts and rescaling is disabled")
            densities = _feasible_densities(draw, sizes, d_target)
        slices = {k: magnitude_prune_layer(params[k], densities[k])
                  for k in keys}
        mask = Mask(slices)
        pool.append(Candidate(cid, densities, mask, mask.density()))
    return pool
