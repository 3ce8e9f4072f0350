import os, sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
import numpy as np
import pytest
from dynamicpruning.dataset import Dataset, gen_blobs, gen_engineered_blobs, apply_imbalance, downsample, split_holdout, load_csv, save_csv
from dynamicpruning.exceptions import InvalidArgument, DatasetParseError
from dynamicpruning.learner import LearnerConfig, init_learner, sgd_epoch, accuracy

def test_blob_counts():
    ds = gen_blobs(100, 2, 2, 0.1, 7)
    assert ds.n_samples == 200
    assert ds.class_counts.tolist() == [100, 100]
    assert ds.ids.tolist() == list(range(200))

def test_blobs_deterministic():
    a = gen_blobs(50, 4, 8, 0.5, 7)
    b = gen_blobs(50, 4, 8, 0.5, 7)
    assert np.array_equal(a.features, b.features)
    assert a.same_as(b)
    assert not a.same_as(gen_blobs(50, 4, 8, 0.5, 8))

def test_separable_blobs_are_learned():
    ds = gen_blobs(100, 2, 2, 0.05, 7)
    state = init_learner(LearnerConfig(milestones=()), ds.dim, ds.num_classes, 0)
    for epoch in range(30):
        state, _ = sgd_epoch(state, ds, ds.ids, 0.1, epoch)
    assert accuracy(state, ds) == 1.0

def test_engineered_blobs():
    ds = gen_engineered_blobs(500, 4, 16, 0.5, 3)
    assert ds.n_samples == 2000
    assert ds.class_counts.tolist() == [500] * 4
    assert ds.same_as(gen_engineered_blobs(500, 4, 16, 0.5, 3))
    with pytest.raises(InvalidArgument):
        gen_engineered_blobs(10, 2, 2, 0.5, 0, easy_fraction=0.8, hard_fraction=0.3)

def test_blob_arguments():
    with pytest.raises(InvalidArgument):
        gen_blobs(0, 2, 2, 0.1, 0)
    with pytest.raises(InvalidArgument):
        gen_blobs(10, 1, 2, 0.1, 0)
    with pytest.raises(InvalidArgument):
        gen_blobs(10, 2, 2, 0.0, 0)

def _balanced(n_per_class, classes):
    labels = np.repeat(np.arange(classes), n_per_class)
    return Dataset.from_arrays(np.zeros((labels.shape[0], 1)), labels, classes)

def test_imbalance():
    ds = _balanced(5000, 1)
    assert apply_imbalance(ds, [0.25], 0).n_samples == 1250
    ds = _balanced(5000, 10)
    rates = [0.25, 0.25, 0.5, 0.5, 0.5, 0.75, 0.75, 1, 1, 1]
    out = apply_imbalance(ds, rates, 0)
    assert out.n_samples == 32500
    assert out.class_counts.tolist() == [1250, 1250, 2500, 2500, 2500, 3750, 3750, 5000, 5000, 5000]
    assert np.all(np.diff(out.ids) > 0)
    assert set(out.ids.tolist()) <= set(ds.ids.tolist())

def test_imbalance_identity():
    ds = gen_blobs(30, 3, 2, 0.5, 1)
    assert apply_imbalance(ds, [1.0, 1.0, 1.0], 5).same_as(ds)
    with pytest.raises(InvalidArgument):
        apply_imbalance(ds, [1.0, 1.0], 5)
    with pytest.raises(InvalidArgument):
        apply_imbalance(ds, [1.0, 0.0, 1.0], 5)

def test_downsample():
    ds = _balanced(5000, 10)
    out = downsample(ds, 1000, 0)
    assert out.n_samples == 10000
    assert out.class_counts.tolist() == [1000] * 10
    small = gen_blobs(20, 3, 2, 0.5, 0)
    assert downsample(small, 20, 1).same_as(small)
    one = downsample(small, 1, 1)
    assert one.n_samples == 3
    assert one.class_counts.tolist() == [1, 1, 1]
    with pytest.raises(InvalidArgument, match="exceeds the smallest class"):
        downsample(small, 21, 1)
    with pytest.raises(InvalidArgument, match="at least 1"):
        downsample(small, 0, 1)

def test_split_holdout():
    ds = gen_blobs(50, 4, 3, 0.5, 0)
    train, test = split_holdout(ds, 0.2, 9)
    assert train.n_samples == 160 and test.n_samples == 40
    assert test.class_counts.tolist() == [10] * 4
    assert not set(train.ids.tolist()) & set(test.ids.tolist())
    assert set(train.ids.tolist()) | set(test.ids.tolist()) == set(ds.ids.tolist())

def test_positions_and_take():
    ds = gen_blobs(5, 2, 2, 0.5, 0).take([1, 3, 4, 8])
    assert ds.ids.tolist() == [1, 3, 4, 8]
    assert ds.positions([4, 1]).tolist() == [2, 0]
    with pytest.raises(InvalidArgument):
        ds.positions([2])
    with pytest.raises(InvalidArgument):
        ds.positions([9])

def test_dataset_validation():
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((2, 1)), [0, 2], num_classes=2, ids=[0, 1])
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((2, 1)), [0, 1], num_classes=2, ids=[1, 1])
    ds = gen_blobs(3, 2, 2, 0.5, 0)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0

def test_load_csv(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,0\n")
    ds = load_csv(path)
    assert ds.n_samples == 3
    assert ds.num_classes == 2
    assert ds.class_counts.tolist() == [2, 1]
    assert ds.features[1].tolist() == [0.3, 0.4]

def test_load_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DatasetParseError, match="empty dataset"):
        load_csv(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,0.2,0\n0.3,0.4,5\n")
    with pytest.raises(DatasetParseError, match="row 2") as info:
        load_csv(bad, num_classes=3)
    assert info.value.row == 2
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("0.1,0.2,0\n0.3,1\n")
    with pytest.raises(DatasetParseError, match="row 2"):
        load_csv(ragged)

def test_save_csv(tmp_path):
    ds = gen_blobs(10, 3, 4, 0.5, 2)
    save_csv(ds, tmp_path / "out.csv")
    assert load_csv(tmp_path / "out.csv", num_classes=3).same_as(ds)
