import numpy as np
import pytest

from fedprune.masking import (
    Candidate,
    Mask,
    apply_mask,
    density,
    density_within,
    feasible_random_mask,
    generate_candidate_pool,
    keep_count,
    magnitude_mask,
    magnitude_prune_layer,
    random_mask,
)
from fedprune.nn import forward, make_mlp


# -- exact counting helpers ---------------------------------------------------

def test_keep_count_honors_decimal_intent():
    # binary float rounding must not inflate the count
    assert keep_count(0.01, 100) == 1
    assert keep_count(0.1, 1000) == 100
    assert keep_count(0.05, 4096) == 205  # ceil(204.8)
    assert keep_count(0.5, 4) == 2
    assert keep_count(0.0, 10) == 0
    assert keep_count(1.0, 10) == 10


def test_density_within_is_exact_at_boundaries():
    assert density_within(1, 100, 0.01)
    assert not density_within(2, 100, 0.01)
    assert density_within(100, 1000, 0.1)
    assert not density_within(101, 1000, 0.1)


# -- Mask / density ------------------------------------------------------------

def test_density_trivial_cases():
    ones = Mask({"a": np.ones((3, 4), dtype=np.uint8)})
    zeros = Mask({"a": np.zeros((3, 4), dtype=np.uint8)})
    assert density(ones) == 1.0
    assert density(zeros) == 0.0
    partial = np.zeros(12, dtype=np.uint8)
    partial[:3] = 1
    assert density(Mask({"a": partial.reshape(3, 4)})) == 0.25


def test_mask_rejects_non_binary_entries():
    with pytest.raises(ValueError):
        Mask({"a": np.array([0, 1, 2], dtype=np.uint8)})


# -- magnitude_prune_layer -------------------------------------------------------

def test_magnitude_keeps_largest():
    w = np.array([1.0, -3.0, 2.0, 0.5])
    m = magnitude_prune_layer(w, 0.5)
    np.testing.assert_array_equal(m, [0, 1, 1, 0])


def test_magnitude_full_density_keeps_all():
    w = np.random.default_rng(0).normal(size=(4, 5))
    np.testing.assert_array_equal(magnitude_prune_layer(w, 1.0), np.ones((4, 5)))


def test_magnitude_matches_sort_oracle():
    rng = np.random.default_rng(11)
    w = rng.normal(size=1000)
    for d in (0.037, 0.5, 0.9):
        m = magnitude_prune_layer(w, d)
        k = keep_count(d, 1000)
        oracle = set(sorted(range(1000), key=lambda i: (-abs(w[i]), i))[:k])
        assert set(np.flatnonzero(m)) == oracle


def test_magnitude_tie_break_prefers_lower_index():
    w = np.array([1.0, -1.0, 1.0, 1.0])
    m = magnitude_prune_layer(w, 0.5)
    np.testing.assert_array_equal(m, [1, 1, 0, 0])


def test_magnitude_is_idempotent():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(20, 10))
    m1 = magnitude_prune_layer(w, 0.3)
    m2 = magnitude_prune_layer(w * m1, 0.3)
    np.testing.assert_array_equal(m1, m2)


def test_support_size_is_exact():
    rng = np.random.default_rng(5)
    for n in (17, 100, 1003):
        w = rng.normal(size=n)
        for d in (0.01, 0.123, 0.5, 0.999):
            assert magnitude_prune_layer(w, d).sum() == keep_count(d, n)


# -- random_mask ----------------------------------------------------------------

def test_random_mask_counts_and_determinism():
    shapes = {"a": (30, 10), "b": (50,)}
    m = random_mask(shapes, 0.2, seed=3)
    assert m.slices["a"].sum() == keep_count(0.2, 300)
    assert m.slices["b"].sum() == keep_count(0.2, 50)
    m2 = random_mask(shapes, 0.2, seed=3)
    np.testing.assert_array_equal(m.slices["a"], m2.slices["a"])


def test_random_mask_all_ones_at_full_density():
    m = random_mask({"a": (4, 4)}, 1.0, seed=0)
    np.testing.assert_array_equal(m.slices["a"], np.ones((4, 4)))


def test_random_mask_seeds_differ():
    shapes = {"a": (1000,)}
    a = random_mask(shapes, 0.5, seed=1).slices["a"]
    b = random_mask(shapes, 0.5, seed=2).slices["a"]
    assert np.any(a != b)


# -- candidate pool ---------------------------------------------------------------

def pool_net(seed=0, hidden=(50, 50, 50)):
    return make_mlp(8, list(hidden), 10, seed=seed)


def test_pool_zero_noise_is_uniform():
    net = pool_net()
    pool = generate_candidate_pool(net, 0.01, 5, noise=0.0, seed=1)
    assert len(pool) == 5
    base = pool[0]
    values = set()
    for cand in pool:
        np.testing.assert_array_equal(
            cand.mask.slices[list(cand.mask.slices)[0]],
            base.mask.slices[list(base.mask.slices)[0]])
        values.update(cand.layer_densities.values())
    assert len(values) == 1  # identical per-layer density everywhere


def test_pool_candidates_respect_target():
    net = pool_net(seed=2)
    pool = generate_candidate_pool(net, 0.01, 50, noise=0.5, seed=9)
    assert len(pool) == 50
    for cand in pool:
        kept, total = cand.mask.counts()
        assert density_within(kept, total, 0.01)
        for key, d in cand.layer_densities.items():
            realized = cand.mask.layer_density(key)
            assert abs(realized - d) <= 1.0 / cand.mask.slices[key].size + 1e-12


def test_pool_is_deterministic():
    net = pool_net(seed=3)
    a = generate_candidate_pool(net, 0.02, 4, noise=0.5, seed=7)
    b = generate_candidate_pool(net, 0.02, 4, noise=0.5, seed=7)
    for ca, cb in zip(a, b):
        assert ca.layer_densities == cb.layer_densities


def test_pool_rescale_fallback_can_be_disabled():
    # an impossible budget forces every draw to be rejected
    net = pool_net(seed=1, hidden=(12, 12, 12))
    with pytest.raises(ValueError):
        generate_candidate_pool(net, 0.001, 1, noise=0.0, seed=0, rescale=False)


def test_pool_infeasible_floor_raises():
    net = pool_net(seed=1, hidden=(12, 12, 12))  # 144-weight layers, floor 10
    with pytest.raises(ValueError):
        generate_candidate_pool(net, 0.001, 1, noise=0.0, seed=0)


# -- masks over networks --------------------------------------------------------

def test_apply_mask_zeroes_and_preserves():
    net = pool_net(seed=4)
    mask = feasible_random_mask(net, 0.1, seed=0)
    sparse = apply_mask(net, mask)
    for key, m in mask.slices.items():
        np.testing.assert_array_equal(sparse.params()[key][m == 0], 0.0)
        kept = m == 1
        np.testing.assert_array_equal(sparse.params()[key][kept],
                                      net.params()[key][kept])
    x = np.random.default_rng(0).normal(size=(4, 8))
    logits, _ = forward(sparse, x, "eval")
    assert np.all(np.isfinite(logits))


def test_static_masks_respect_budget():
    net = pool_net(seed=5)
    for mask in (magnitude_mask(net, 0.05), feasible_random_mask(net, 0.05, 3)):
        kept, total = mask.counts()
        assert density_within(kept, total, 0.05)
    m = magnitude_mask(net, 0.05)
    # magnitude mask keeps the largest entries of each prunable tensor
    for key, sl in m.slices.items():
        w = np.abs(net.params()[key])
        assert w[sl == 1].min() >= np.sort(w[sl == 0].reshape(-1))[-1] - 1e-12
