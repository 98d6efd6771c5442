import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from admeta.data import (Corpus, DataError, Dataset, assign_splits, load_corpus, load_dataset,
                         make_rng, save_dataset, split_corpus, split_sizes, write_corpus)


def test_dataset_is_read_only_copy():
    X = np.arange(6.0).reshape(3, 2)
    ds = Dataset("a", X, [0, 1, 0])
    X[0, 0] = 99
    assert ds.X[0, 0] == 0
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1
    assert (ds.n, ds.k) == (3, 2)
    assert ds.unlabeled().labels is None


@pytest.mark.parametrize("X,labels", [
    (np.zeros((1, 2)), None),
    (np.zeros((3, 0)), None),
    (np.array([[1.0, np.nan], [0, 0]]), None),
    (np.zeros((3, 2)), [0, 1]),
    (np.zeros((3, 2)), [0, 2, 1]),
])
def test_dataset_rejects_bad_input(X, labels):
    with pytest.raises(DataError):
        Dataset("bad", X, labels)


def test_csv_round_trip_is_exact(tmp_path):
    r = np.random.default_rng(0)
    ds = Dataset("rt", r.normal(size=(7, 3)) * 1e3, r.integers(0, 2, 7))
    save_dataset(ds, tmp_path / "rt.csv")
    back = load_dataset(tmp_path / "rt.csv", "label")
    assert back.name == "rt"
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.labels, ds.labels)


@pytest.mark.parametrize("body,msg", [
    ("a,b\n1,x\n2,3\n", "non-numeric"),
    ("a,b\n1,inf\n2,3\n", "non-finite"),
    ("a,b\n1,2\n", "at least 2 rows"),
    ("a,label\n1,0\n2,3\n", "not 0 or 1"),
    ("a,b\n1,2,3\n4,5\n", "cells"),
])
def test_load_dataset_errors(tmp_path, body, msg):
    p = tmp_path / "d.csv"
    p.write_text(body)
    label = "label" if "label" in body else None
    with pytest.raises(DataError, match=msg):
        load_dataset(p, label)


def test_missing_file_and_label_column(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_dataset(tmp_path / "nope.csv")
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    with pytest.raises(DataError, match="label column"):
        load_dataset(p, "label")


def test_corpus_names_and_lookup(tmp_path):
    dss = [Dataset(f"d{i}", np.eye(3) * i, [0, 0, 1]) for i in range(3)]
    write_corpus(dss, tmp_path)
    c = load_corpus(tmp_path)
    assert c.names == ["d0", "d1", "d2"]
    assert np.array_equal(c["d2"].X, dss[2].X)
    with pytest.raises(DataError, match="duplicate"):
        Corpus((dss[0], dss[0]))


def test_split_sizes_largest_remainder():
    assert split_sizes(400, (0.6, 0.15, 0.25)) == [240, 60, 100]
    assert split_sizes(10, (0.6, 0.15, 0.25)) == [6, 2, 2]
    assert sum(split_sizes(7, (0.6, 0.15, 0.25))) == 7


def test_assign_splits_deterministic_and_complete():
    names = [f"n{i}" for i in range(40)]
    a = assign_splits(names, seed=3)
    assert a == assign_splits(names, seed=3)
    assert a != assign_splits(names, seed=4)
    assert sorted(a) == sorted(names)
    assert [list(a.values()).count(s) for s in ("train", "val", "test")] == [24, 6, 10]
    c = split_corpus(Corpus(tuple(Dataset(n, np.eye(2)) for n in names)), seed=3)
    assert len(c.subset("test")) == 10


def test_assign_splits_rejects_bad_ratios():
    with pytest.raises(DataError):
        assign_splits(["a", "b", "c", "d"], (0.5, 0.5, 0.5))
    with pytest.raises(DataError):
        assign_splits(["a", "b"])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.integers(0, 1000), max_size=3))
def test_make_rng_streams_reproducible(seed, keys):
    a = make_rng(seed, *keys).random(4)
    b = make_rng(seed, *keys).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(seed, *keys, 7).random(4))
