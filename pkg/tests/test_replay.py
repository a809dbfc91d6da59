import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrogate_se.dsp import Utterance
from surrogate_se.replay import FORMAT_VERSION, MAGIC, ReplayBuffer, ScoredSample


def _sample(i, n=64, epoch=1, q=0.5, magnitude=False):
    payload = np.full((n // 8, 8), float(i)) if magnitude else Utterance(f"u{i}", np.full(n, i * 1e-3))
    return ScoredSample(payload, f"clean{i}", f"noisy{i}", q, epoch)


def _fill(buf, epochs, per_epoch):
    for e in range(1, epochs + 1):
        buf.store_batch(_sample(e * 1000 + i, epoch=e) for i in range(per_epoch))
    return buf


def test_scored_sample_rejects_bad_score():
    with pytest.raises(ValueError):
        _sample(0, q=1.5)


def test_store_invalid_batch_is_atomic():
    buf = ReplayBuffer()
    bad = object.__new__(ScoredSample)
    object.__setattr__(bad, "q_true", float("nan"))
    with pytest.raises(ValueError):
        buf.store_batch([_sample(0), bad])
    assert buf.size == 0


@pytest.mark.parametrize("epochs, n", [(1, 100), (3, 100), (4, 7)])
def test_size_is_epochs_times_samples(epochs, n):
    assert _fill(ReplayBuffer(), epochs, n).size == epochs * n


def test_history_portion_counts():
    buf = _fill(ReplayBuffer(seed=3), 3, 100)
    drawn = buf.sample_history(0.2)
    assert len(drawn) == 60
    assert len({s.clean_ref_id for s in drawn}) == 60
    assert buf.sample_history(0.0) == []
    assert len(buf.sample_history(1.0)) == 300


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 200), st.floats(0.0, 1.0))
def test_history_is_floor_and_distinct(size, portion):
    buf = ReplayBuffer(seed=0).store_batch(_sample(i, n=8) for i in range(size))
    drawn = buf.sample_history(portion)
    assert len(drawn) == int(np.floor(portion * size + 1e-9))
    assert len({s.clean_ref_id for s in drawn}) == len(drawn)


def test_portion_validation():
    with pytest.raises(ValueError):
        ReplayBuffer().sample_history(1.5)


def test_sampling_is_seeded():
    a = _fill(ReplayBuffer(seed=9), 2, 50).sample_history(0.3)
    b = _fill(ReplayBuffer(seed=9), 2, 50).sample_history(0.3)
    assert [s.clean_ref_id for s in a] == [s.clean_ref_id for s in b]


def test_snapshot_restore():
    buf = _fill(ReplayBuffer(seed=1), 2, 10)
    snap = buf.snapshot()
    after = buf.sample_history(0.5)
    buf.store_batch(_sample(i) for i in range(5))
    buf.restore(snap)
    assert buf.size == 20
    assert [s.clean_ref_id for s in buf.sample_history(0.5)] == [s.clean_ref_id for s in after]


def test_max_items_evicts_oldest():
    buf = _fill(ReplayBuffer(max_items=15), 2, 10)
    assert buf.size == 15
    assert buf[0].epoch == 1 and buf[0].clean_ref_id == "clean1005"


@pytest.mark.parametrize("magnitude", [False, True])
def test_save_load_round_trip(tmp_path, magnitude):
    buf = ReplayBuffer().store_batch(
        [_sample(i, magnitude=magnitude, q=i / 10, epoch=i) for i in range(1, 6)]
        + [ScoredSample(Utterance("x", np.zeros(4)), "çlean-ü", "nøisy", 0.0, 7)]
    )
    path = buf.save(tmp_path / "buf.ssrb")
    raw = path.read_bytes()
    assert raw[:4] == MAGIC and int.from_bytes(raw[4:6], "little") == FORMAT_VERSION
    back = ReplayBuffer.load(path)
    assert back.size == buf.size
    for a, b in zip(buf, back):
        assert (a.clean_ref_id, a.noisy_ref_id, a.q_true, a.epoch) == (b.clean_ref_id, b.noisy_ref_id, b.q_true, b.epoch)
        pa = a.enhanced.samples if isinstance(a.enhanced, Utterance) else a.enhanced
        pb = b.enhanced.samples if isinstance(b.enhanced, Utterance) else b.enhanced
        np.testing.assert_allclose(pb, pa.astype(np.float32))


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk"
    p.write_bytes(b"NOPE\x01\x00\x00\x00")
    with pytest.raises(ValueError, match="not a replay"):
        ReplayBuffer.load(p)
    p.write_bytes(MAGIC + (99).to_bytes(2, "little") + b"\x00\x00")
    with pytest.raises(ValueError, match="version"):
        ReplayBuffer.load(p)


def test_spill_to_disk(tmp_path):
    spill = tmp_path / "spill.ssrb"
    buf = ReplayBuffer(memory_budget=64 * 4 * 3, spill_path=spill)
    buf.store_batch(_sample(i, epoch=1) for i in range(10))
    assert spill.exists() and buf.size == 10
    assert [s.clean_ref_id for s in buf] == [f"clean{i}" for i in range(10)]
    np.testing.assert_allclose(buf[9].enhanced.samples, np.float32(9e-3))
    assert len(buf.sample_history(0.5)) == 5


def test_over_budget_without_spill_path():
    with pytest.raises(RuntimeError, match="spill_path"):
        ReplayBuffer(memory_budget=10).store_batch([_sample(0)])
