import os

import numpy as np
import pytest

from surrogate_se.data import DatasetError, ingest_dataset, match_dirs, synthetic_corpus, synthetic_pair, write_corpus
from surrogate_se.dsp import snr_db


def test_three_pairs(tmp_path):
    write_corpus(tmp_path, synthetic_corpus(3, seed=0, duration=0.1))
    m = ingest_dataset(tmp_path, "train")
    assert len(m) == 3 and m.ids == ["syn0000", "syn0001", "syn0002"]
    pairs = m.load()
    assert all(len(p.clean) == len(p.noisy) == 1600 for p in pairs)


def test_orphan_named(tmp_path):
    write_corpus(tmp_path, synthetic_corpus(2, seed=0, duration=0.1))
    os.remove(tmp_path / "noisy_trainset" / "syn0001.wav")
    with pytest.raises(DatasetError, match="syn0001.wav"):
        ingest_dataset(tmp_path)


def test_zero_pairs(tmp_path):
    for d in ("clean_testset", "noisy_testset"):
        (tmp_path / d).mkdir()
    with pytest.raises(DatasetError, match="zero pairs"):
        ingest_dataset(tmp_path, "test")


def test_missing_dir_and_bad_split(tmp_path):
    with pytest.raises(DatasetError, match="missing directory"):
        ingest_dataset(tmp_path)
    with pytest.raises(DatasetError, match="split"):
        ingest_dataset(tmp_path, "dev")


def test_order_independent(tmp_path):
    pairs = synthetic_corpus(4, seed=0, duration=0.1)
    write_corpus(tmp_path / "a", pairs)
    write_corpus(tmp_path / "b", pairs[::-1])
    ma = match_dirs(tmp_path / "a" / "clean_trainset", tmp_path / "a" / "noisy_trainset")
    mb = match_dirs(tmp_path / "b" / "clean_trainset", tmp_path / "b" / "noisy_trainset")
    assert ma.ids == mb.ids == sorted(ma.ids)


@pytest.mark.parametrize("band", [None, (1500.0, 7500.0)])
def test_synthetic_pair_snr(band):
    rng = np.random.default_rng(0)
    for i in range(5):
        p = synthetic_pair(rng, f"u{i}", snr_db=(2.0, 2.0), noise_band=band)
        assert len(p.clean) == 16000
        assert snr_db(p.clean.samples, p.noisy.samples) == pytest.approx(2.0, abs=1e-6)
        assert np.max(np.abs(p.noisy.samples)) <= 0.99 + 1e-12


def test_band_limited_noise_stays_in_band():
    p = synthetic_pair(np.random.default_rng(1), "u", noise_band=(1500.0, 7500.0))
    noise = p.noisy.samples - p.clean.samples
    power = np.abs(np.fft.rfft(noise)) ** 2
    freqs = np.fft.rfftfreq(noise.size, 1 / 16000)
    assert power[(freqs > 1500) & (freqs < 7500)].sum() > 0.97 * power.sum()
    assert power[freqs < 1000].sum() < 1e-3 * power.sum()


def test_corpus_seeded():
    a, b = synthetic_corpus(2, seed=7), synthetic_corpus(2, seed=7)
    np.testing.assert_array_equal(a[1].noisy.samples, b[1].noisy.samples)
