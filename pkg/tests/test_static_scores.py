import csv, os, sys, math
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
import numpy as np
import pytest
from dynamicpruning.dataset import gen_blobs
from dynamicpruning.exceptions import InvalidArgument, DatasetParseError
from dynamicpruning.learner import LearnerConfig, init_learner, sgd_epoch, lr_at, per_sample_error_norm
from dynamicpruning.policies import count_forgetting_events, compute_forget_scores, compute_el2n_trials, compute_el2n_scores, save_static_scores, load_static_scores, meta_path

CONFIG = LearnerConfig(batch_size=32, milestones=())

def _events_by_hand(column):
    if not any(column):
        return None
    return sum(1 for a, b in zip(column, column[1:]) if a and not b)

def test_forgetting_events():
    T, F = True, False
    history = np.array([[T, T, F], [F, T, F], [T, T, F], [F, T, F]])
    assert count_forgetting_events(history).tolist() == [2, 0, 3]
    assert count_forgetting_events(history, sentinel=99).tolist() == [2, 0, 99]
    with pytest.raises(InvalidArgument):
        count_forgetting_events([T, F])

def test_forgetting_events_oracle():
    rng = np.random.default_rng(6)
    for _ in range(200):
        history = rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 9)))) < 0.6
        events = count_forgetting_events(history)
        for i in range(history.shape[1]):
            expected = _events_by_hand(history[:, i].tolist())
            assert events[i] == (history.shape[1] if expected is None else expected)

def test_forget_scores():
    ds = gen_blobs(20, 3, 4, 1.0, 0)
    scores = compute_forget_scores(ds, CONFIG, 4, 7)
    assert scores.shape == (60,)
    assert np.all((scores >= 0) & (scores <= 60))
    assert np.array_equal(scores, compute_forget_scores(ds, CONFIG, 4, 7))

def test_el2n_single_model():
    ds = gen_blobs(15, 3, 4, 1.0, 1)
    trials = compute_el2n_trials(ds, CONFIG, 1, 3, [5])
    state = init_learner(CONFIG, ds.dim, ds.num_classes, 5)
    shuffle = np.random.default_rng(5)
    for epoch in range(3):
        state, _ = sgd_epoch(state, ds, ds.ids, lr_at(CONFIG.schedule, epoch), int(shuffle.integers(2 ** 32)))
    assert trials.shape == (1, 45)
    assert np.array_equal(trials[0], per_sample_error_norm(state, ds))
    assert np.all((trials >= 0) & (trials <= math.sqrt(2)))

def test_el2n_duplicate_seeds():
    ds = gen_blobs(15, 3, 4, 1.0, 1)
    single = compute_el2n_scores(ds, CONFIG, 1, 2, [9])
    assert np.allclose(compute_el2n_scores(ds, CONFIG, 2, 2, [9, 9]), single, rtol=0, atol=1e-15)
    with pytest.raises(InvalidArgument):
        compute_el2n_trials(ds, CONFIG, 2, 2, [9])
    with pytest.raises(InvalidArgument):
        compute_el2n_trials(ds, CONFIG, 1, 0, [9])

def test_score_file(tmp_path):
    ids = np.array([3, 5, 8])
    save_static_scores(tmp_path / "one.csv", ids, np.array([0.25, 1.0, 0.5]), meta={"method": "el2n", "offline_seconds": 1.5})
    got_ids, scores, meta = load_static_scores(tmp_path / "one.csv")
    assert got_ids.tolist() == [3, 5, 8]
    assert scores.tolist() == [[0.25, 1.0, 0.5]]
    assert meta == {"method": "el2n", "offline_seconds": 1.5}
    assert (tmp_path / "one.csv").read_text().splitlines()[0] == "id,score"
    assert meta_path(tmp_path / "one.csv").name == "one.csv.meta.json"
    trials = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
    save_static_scores(tmp_path / "two.csv", ids, trials)
    assert (tmp_path / "two.csv").read_text().splitlines()[0] == "id,score_trial_1,score_trial_2"
    assert np.array_equal(load_static_scores(tmp_path / "two.csv")[1], trials)
    assert load_static_scores(tmp_path / "two.csv")[2] == {}

def test_score_file_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,score\n1,0.5\n2\n")
    with pytest.raises(DatasetParseError, match="row 3"):
        load_static_scores(path)
    path.write_text("score\n0.5\n")
    with pytest.raises(DatasetParseError):
        load_static_scores(path)
    path.write_text("id,score\n")
    with pytest.raises(DatasetParseError, match="empty"):
        load_static_scores(path)

def test_score_file_parses_as_plain_csv(tmp_path):
    path = tmp_path / "s.csv"
    save_static_scores(path, np.array([1, 2]), np.array([0.5, 0.75]), meta={"method": "forget", "offline_seconds": 0.25})
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows == [{"id": "1", "score": "0.5"}, {"id": "2", "score": "0.75"}]
    save_static_scores(path, np.array([1, 2]), np.array([0.5, 0.75]))
    assert not meta_path(path).exists()
    meta_path(path).write_text("[1, 2]")
    with pytest.raises(DatasetParseError):
        load_static_scores(path)
