import numpy as np
import pytest

from fedprune.data import (
    Dataset,
    PartitionSpec,
    dev_split,
    dirichlet_partition,
    load_csv,
    make_blobs,
    split_indices,
)


# -- make_blobs -------------------------------------------------------------

def test_blobs_construction():
    ds = make_blobs(2, 5, 3, 1.0, seed=0)
    assert len(ds) == 10 and ds.dim == 3 and ds.classes == 2
    assert (ds.labels == 0).sum() == 5 and (ds.labels == 1).sum() == 5


def test_blobs_deterministic():
    a = make_blobs(3, 4, 2, 0.5, seed=7)
    b = make_blobs(3, 4, 2, 0.5, seed=7)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_blobs_zero_spread_collapses_classes():
    ds = make_blobs(3, 4, 5, 0.0, seed=1)
    for c in range(3):
        rows = ds.features[ds.labels == c]
        assert np.all(rows == rows[0])


# -- dirichlet_partition ------------------------------------------------------

def test_partition_is_complete_and_disjoint():
    ds = make_blobs(4, 50, 2, 1.0, seed=3)
    parts = dirichlet_partition(ds, PartitionSpec(5, 0.5, seed=1))
    assert len(parts) == 5
    rows = np.concatenate([p.features for p in parts])
    key = np.lexsort(rows.T)
    base_key = np.lexsort(ds.features.T)
    np.testing.assert_array_equal(rows[key], ds.features[base_key])
    assert sum(len(p) for p in parts) == len(ds)
    assert all(len(p) >= 1 for p in parts)


def test_single_client_gets_everything():
    ds = make_blobs(2, 10, 2, 1.0, seed=0)
    (part,) = dirichlet_partition(ds, PartitionSpec(1, 0.5, seed=0))
    np.testing.assert_array_equal(np.sort(part.labels), np.sort(ds.labels))


def test_partition_near_uniform_at_huge_alpha():
    # alpha -> inf limit: client label shares within 5% of the global shares
    for seed in range(10):
        ds = make_blobs(10, 1000, 2, 1.0, seed=seed)
        parts = dirichlet_partition(ds, PartitionSpec(10, 1e6, seed=seed))
        for p in parts:
            shares = np.bincount(p.labels, minlength=10) / len(p)
            assert np.all(np.abs(shares - 0.1) < 0.05)


def test_partition_rejects_more_clients_than_samples():
    ds = make_blobs(2, 2, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        dirichlet_partition(ds, PartitionSpec(5, 0.5, seed=0))


def test_heterogeneity_grows_as_alpha_shrinks():
    # average TV distance to the global label distribution: alpha=0.1 vs 10
    def mean_tv(alpha):
        total = 0.0
        runs = 0
        for seed in range(20):
            ds = make_blobs(5, 40, 2, 1.0, seed=seed)
            global_shares = np.bincount(ds.labels, minlength=5) / len(ds)
            for p in dirichlet_partition(ds, PartitionSpec(4, alpha, seed=seed)):
                shares = np.bincount(p.labels, minlength=5) / len(p)
                total += 0.5 * np.abs(shares - global_shares).sum()
                runs += 1
        return total / runs

    assert mean_tv(0.1) > mean_tv(10.0)


# -- dev_split ---------------------------------------------------------------

def test_dev_split_full_ratio_returns_everything():
    ds = make_blobs(2, 5, 2, 1.0, seed=0)
    sub = dev_split(ds, 1.0, seed=3)
    np.testing.assert_array_equal(sub.features, ds.features)


def test_dev_split_size_and_membership():
    ds = make_blobs(2, 50, 3, 1.0, seed=1)
    sub = dev_split(ds, 0.1, seed=5)
    assert len(sub) == 10
    rows = {tuple(r) for r in ds.features}
    assert all(tuple(r) in rows for r in sub.features)


def test_dev_split_seeds_differ_but_sizes_match():
    ds = make_blobs(2, 50, 3, 1.0, seed=1)
    a = dev_split(ds, 0.2, seed=1)
    b = dev_split(ds, 0.2, seed=2)
    assert len(a) == len(b) == 20
    assert not np.array_equal(a.features, b.features)


def test_split_indices_cover_everything():
    groups = split_indices(100, [0.2, 0.1], seed=4)
    assert len(groups) == 3
    assert len(groups[0]) == 20 and len(groups[1]) == 10 and len(groups[2]) == 70
    np.testing.assert_array_equal(np.sort(np.concatenate(groups)), np.arange(100))


# -- load_csv ----------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("1.0,2.0,0\n3.0,4.0,1\n")
    ds = load_csv(path)
    assert len(ds) == 2 and ds.dim == 2 and ds.classes == 2
    np.testing.assert_array_equal(ds.features, [[1.0, 2.0], [3.0, 4.0]])


def test_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError):
        load_csv(empty)

    bad_label = tmp_path / "bad.csv"
    bad_label.write_text("1.0,-1\n")
    with pytest.raises(ValueError, match="line 1"):
        load_csv(bad_label)

    not_int = tmp_path / "notint.csv"
    not_int.write_text("1.0,0\n2.0,x\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(not_int)

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1.0,2.0,0\n1.0,1\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(ragged)


def test_csv_header_flag(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("a,b,label\n1.0,2.0,0\n")
    ds = load_csv(path, skip_header=True)
    assert len(ds) == 1


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 5]), 2)
