import csv, io, os, sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
import numpy as np
import pytest
from dynamicpruning import scoreboard
from dynamicpruning.scoreboard import init_scores, observe, record_selection, snapshot, restore, restore_with_ids
from dynamicpruning.exceptions import EmptyScoreboard, NonFiniteScores, CorruptSnapshot, SelectionError, InvalidArgument

def test_init():
    sb = init_scores([1.0, 2.0])
    assert sb.ema.tolist() == [1.0, 2.0]
    assert sb.var.tolist() == [0.0, 0.0]
    assert sb.sel_count.tolist() == [0, 0]
    assert sb.checkpoints_seen == 0
    zero = init_scores(np.zeros(4))
    assert not zero.ema.any() and not zero.var.any() and not zero.last_raw.any()
    with pytest.raises(EmptyScoreboard, match="empty scoreboard"):
        init_scores([])
    with pytest.raises(NonFiniteScores):
        init_scores([1.0, float("nan")])
    with pytest.raises(InvalidArgument):
        init_scores([1.0], alpha=0.0)

def test_observe_values():
    sb = observe(init_scores([0.5], 0.8), [1.0])
    assert sb.ema[0] == pytest.approx(0.9)
    assert sb.var[0] == pytest.approx(0.2)
    assert sb.last_raw.tolist() == [1.0]
    assert sb.checkpoints_seen == 1
    sb = observe(init_scores([0.5, 3.0], 1.0), [2.0, 1.0])
    assert sb.ema.tolist() == [2.0, 1.0]
    assert sb.var.tolist() == [2.25, 4.0]

def test_observe_fixed_point():
    sb = init_scores([1.0, 2.0], 0.8)
    sb.observe([3.0, 0.0])
    ema, var = sb.ema.copy(), sb.var.copy()
    sb.observe(ema)
    assert np.allclose(sb.ema, ema, rtol=0, atol=1e-15)
    assert np.allclose(sb.var, 0.2 * var, rtol=0, atol=1e-15)

def test_observe_errors():
    sb = init_scores([1.0, 2.0])
    with pytest.raises(InvalidArgument):
        sb.observe([1.0])
    with pytest.raises(NonFiniteScores):
        sb.observe([1.0, float("inf")])

def _brute_force(sequence, alpha):
    ema, var = [], []
    for i in range(len(sequence[0])):
        e, v = sequence[0][i], 0.0
        for raw in sequence[1:]:
            v = (1 - alpha) * v + alpha * (raw[i] - e) ** 2
            e = alpha * raw[i] + (1 - alpha) * e
        ema.append(e)
        var.append(v)
    return np.array(ema), np.array(var)

def test_matches_brute_force_recurrence():
    rng = np.random.default_rng(0)
    for case in range(100):
        n, p = int(rng.integers(1, 51)), int(rng.integers(1, 21))
        alpha = [0.2, 0.8, 1.0][case % 3]
        sequence = [rng.exponential(size=n).tolist() for _ in range(p + 1)]
        sb = init_scores(sequence[0], alpha)
        for raw in sequence[1:]:
            sb.observe(raw)
        ema, var = _brute_force(sequence, alpha)
        assert np.allclose(sb.ema, ema, rtol=1e-12, atol=0)
        assert np.allclose(sb.var, var, rtol=1e-12, atol=1e-300)
        assert np.all(sb.var >= 0)
        assert sb.checkpoints_seen == p

def test_welford_rule():
    rng = np.random.default_rng(5)
    sequence = rng.normal(size=(8, 6))
    sb = init_scores(sequence[0], 0.8, variance_rule="welford")
    for raw in sequence[1:]:
        sb.observe(raw)
    assert np.allclose(sb.var, sequence.var(axis=0), rtol=1e-12, atol=1e-15)
    assert np.allclose(sb.welford_mean, sequence.mean(axis=0), rtol=1e-12, atol=1e-15)
    literal = init_scores(sequence[0], 0.8)
    for raw in sequence[1:]:
        literal.observe(raw)
    assert np.array_equal(sb.ema, literal.ema)

def test_record_selection():
    sb = init_scores([0.0, 0.0, 0.0])
    record_selection(sb, [0, 2])
    assert sb.sel_count.tolist() == [1, 0, 1]
    record_selection(sb, [])
    assert sb.sel_count.tolist() == [1, 0, 1]
    for _ in range(4):
        sb.record_selection([1, 2])
    assert sb.sel_count.tolist() == [1, 4, 5]
    with pytest.raises(SelectionError):
        sb.record_selection([3])

def test_selection_count_bounded_by_checkpoints():
    rng = np.random.default_rng(1)
    sb = init_scores(rng.random(20))
    for _ in range(15):
        sb.observe(rng.random(20))
        sb.record_selection(rng.choice(20, size=5, replace=False))
        assert np.all(sb.sel_count <= sb.checkpoints_seen)
    sb.pass_checkpoint()
    assert sb.checkpoints_seen == 16

def test_ucb_and_copy():
    sb = init_scores([0.9, 0.8])
    sb.var[:] = [0.0, 0.2]
    assert sb.ucb(1.0).tolist() == pytest.approx([0.9, 1.0])
    twin = sb.copy()
    assert twin == sb
    twin.observe([0.0, 0.0])
    assert twin != sb

@pytest.mark.parametrize("rule", ["literal", "welford"])
def test_snapshot_round_trip(rule):
    rng = np.random.default_rng(3)
    sb = init_scores(rng.random(12) * 1e-3, 0.3, variance_rule=rule)
    for _ in range(5):
        sb.observe(rng.random(12) / 3)
        sb.record_selection(rng.choice(12, size=4, replace=False))
    data = snapshot(sb)
    header = next(csv.DictReader(io.StringIO(data.decode())))
    assert list(header)[:5] == ["id", "ema", "var", "last_raw", "sel_count"]
    assert header["variance_rule"] == rule and float(header["alpha"]) == 0.3
    assert restore(data) == sb
    assert snapshot(restore(data)) == data
    ids = np.arange(100, 112)
    again, restored_ids = restore_with_ids(sb.snapshot(ids))
    assert again == sb and restored_ids.tolist() == ids.tolist()

def test_snapshot_corruption():
    sb = init_scores([1.0, 2.0, 3.0]).observe([0.5, 0.5, 0.5])
    data = snapshot(sb)
    with pytest.raises(CorruptSnapshot):
        restore(data[: len(data) // 2])
    with pytest.raises(CorruptSnapshot):
        restore(b"")
    with pytest.raises(CorruptSnapshot):
        restore(data.replace(b"id,ema", b"id,mean"))
    with pytest.raises(CorruptSnapshot):
        restore(b"\xff\xfe")
    sb_bad = sb.copy()
    sb_bad.var[0] = -1.0
    with pytest.raises(CorruptSnapshot):
        restore(snapshot(sb_bad))

def test_save_load(tmp_path):
    sb = init_scores([1.0, 2.0]).observe([2.0, 1.0]).record_selection([1])
    scoreboard.save(sb, tmp_path / "sb.csv")
    assert scoreboard.load(tmp_path / "sb.csv") == sb

def test_snapshot_is_flat_csv():
    sb = init_scores([1.0, 2.0, 3.0]).observe([0.5, 0.25, 4.0]).record_selection([0, 2])
    rows = list(csv.DictReader(io.StringIO(snapshot(sb, np.array([7, 8, 9])).decode())))
    assert [int(row["id"]) for row in rows] == [7, 8, 9]
    assert [float(row["ema"]) for row in rows] == sb.ema.tolist()
    assert [int(row["sel_count"]) for row in rows] == [1, 0, 1]
    assert all(row["welford_mean"] == "" and row["checkpoints_seen"] == "1" for row in rows)

@pytest.mark.parametrize("column,value", [("variance_rule", "bogus"), ("alpha", "1.5"), ("alpha", "0.0"), ("n_samples", "2")])
def test_restore_rejects_bad_scalars(column, value):
    sb = init_scores([1.0, 2.0, 3.0]).observe([0.5, 0.25, 4.0])
    rows = list(csv.reader(io.StringIO(snapshot(sb).decode())))
    position = rows[0].index(column)
    for row in rows[1:]:
        row[position] = value
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows(rows)
    with pytest.raises(CorruptSnapshot):
        restore(out.getvalue().encode())

def test_restore_rejects_mixed_scalars():
    data = snapshot(init_scores([1.0, 2.0]))
    lines = data.decode().splitlines()
    lines[2] = lines[2].replace(",literal,", ",welford,")
    with pytest.raises(CorruptSnapshot):
        restore("\n".join(lines).encode())
