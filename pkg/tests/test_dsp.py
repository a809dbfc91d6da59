import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrogate_se.dsp import (
    AudioFormatError, Spectrogram, StftConfig, Utterance, apply_mask, istft, load_wav, save_wav, snr_db, stft,
)


def _write_pcm(path, data, channels=1, rate=16000, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(data).astype(f"<i{width}").tobytes())
    return path


def _dft_magnitude(frame):
    # DFT by definition, bins 0..N/2
    n = frame.size
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return np.abs(np.sum(frame[None, :] * np.exp(-2j * np.pi * k * t / n), axis=1))


class TestWavIO:
    def test_silence(self, tmp_path):
        u = load_wav(_write_pcm(tmp_path / "s.wav", np.zeros(16000)))
        assert len(u) == 16000 and u.sample_rate == 16000
        assert np.all(u.samples == 0)

    def test_full_scale_pulse(self, tmp_path):
        u = load_wav(_write_pcm(tmp_path / "p.wav", np.full(100, 32767)))
        assert u.samples.max() == 32767 / 32768

    def test_stereo_rejected(self, tmp_path):
        path = _write_pcm(tmp_path / "st.wav", np.zeros(200), channels=2)
        with pytest.raises(AudioFormatError, match="multi-channel unsupported"):
            load_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_wav(tmp_path / "nope.wav")

    def test_8bit_rejected(self, tmp_path):
        path = tmp_path / "b.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(16000)
            wf.writeframes(bytes(100))
        with pytest.raises(AudioFormatError, match="unsupported encoding"):
            load_wav(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "g.wav"
        path.write_bytes(b"not a riff file at all")
        with pytest.raises(AudioFormatError):
            load_wav(path)

    def test_wrong_rate_rejected(self, tmp_path):
        path = _write_pcm(tmp_path / "r.wav", np.zeros(100), rate=8000)
        with pytest.raises(AudioFormatError, match="8000"):
            load_wav(path)
        assert load_wav(path, expected_rate=None).sample_rate == 8000

    def test_save_load_roundtrip(self, tmp_path, rng):
        pcm = rng.integers(-32768, 32767, 1000)
        u = Utterance("x", pcm / 32768.0)
        back = load_wav(save_wav(tmp_path / "x.wav", u))
        np.testing.assert_array_equal(back.samples, u.samples)


class TestUtterance:
    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            Utterance("e", np.array([]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            Utterance("n", np.array([0.0, np.nan]))


class TestStft:
    def test_zero_signal(self):
        spec = stft(Utterance("z", np.zeros(4096)))
        assert np.all(spec.magnitude == 0)
        assert spec.shape[1] == 257

    def test_sine_peak_bin(self):
        cfg = StftConfig()
        n = 16000
        x = np.sin(2 * np.pi * 1000 * np.arange(n) / 16000)
        spec = stft(Utterance("s", x), cfg)
        expected_bin = 1000 * cfg.fft_size // 16000
        assert expected_bin == 32
        for t in range(1, spec.shape[0] - 1):
            assert np.argmax(spec.magnitude[t]) == expected_bin
        frame = x[5 * cfg.hop: 5 * cfg.hop + cfg.fft_size] * cfg.window_array()
        oracle = _dft_magnitude(frame)
        assert np.argmax(oracle) == 32
        np.testing.assert_allclose(spec.magnitude[5], oracle, atol=1e-9)

    def test_frame_count_matches_brute_force(self, rng):
        cfg = StftConfig()
        x = rng.standard_normal(16384)
        frames = []
        start = 0
        while start + cfg.fft_size <= x.size:
            frames.append(_dft_magnitude(x[start:start + cfg.fft_size] * cfg.window_array()))
            start += cfg.hop
        spec = stft(Utterance("w", x), cfg)
        assert spec.shape[0] == len(frames) == 63
        np.testing.assert_allclose(spec.magnitude, np.array(frames), atol=1e-8)

    def test_too_short(self):
        with pytest.raises(ValueError, match="shorter than one frame"):
            stft(Utterance("short", np.zeros(511)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StftConfig(fft_size=512, hop=1024)
        assert StftConfig().n_bins == 257


class TestIstft:
    def test_zero_roundtrip(self):
        out = istft(stft(Utterance("z", np.zeros(4096))))
        assert np.all(out.samples == 0)

    def test_noise_roundtrip_snr(self, noise_utt):
        cfg = StftConfig()
        out = istft(stft(noise_utt, cfg), length=len(noise_utt))
        inner = slice(cfg.fft_size, len(noise_utt) - cfg.fft_size)
        assert snr_db(noise_utt.samples[inner], out.samples[inner]) >= 50

    def test_deterministic(self, noise_utt):
        a = istft(stft(noise_utt)).samples
        b = istft(stft(noise_utt)).samples
        np.testing.assert_array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="phase shape"):
            Spectrogram(np.zeros((3, 257)), np.zeros((4, 257)))

    def test_length_padding(self, noise_utt):
        out = istft(stft(noise_utt), length=len(noise_utt))
        assert len(out) == len(noise_utt)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(2048, 8000))
    def test_roundtrip_property(self, seed, n):
        cfg = StftConfig()
        x = np.random.default_rng(seed).uniform(-1, 1, n)
        out = istft(stft(Utterance("p", x), cfg), length=n)
        inner = slice(cfg.fft_size, cfg.n_frames(n) * cfg.hop + cfg.hop - cfg.fft_size)
        assert snr_db(x[inner], out.samples[inner]) >= 50


class TestApplyMask:
    @pytest.fixture
    def spec(self, noise_utt):
        return stft(noise_utt)

    def test_identity(self, spec):
        out = apply_mask(spec, np.ones(spec.shape))
        np.testing.assert_array_equal(out.magnitude, spec.magnitude)

    @pytest.mark.parametrize("gain", [0.05, 1.2])
    def test_constant_gain(self, spec, gain):
        out = apply_mask(spec, np.full(spec.shape, gain))
        np.testing.assert_array_equal(out.magnitude, gain * spec.magnitude)

    def test_phase_passthrough(self, spec, rng):
        out = apply_mask(spec, rng.uniform(0.05, 1.2, spec.shape))
        np.testing.assert_array_equal(out.phase, spec.phase)

    def test_shape_mismatch(self, spec):
        with pytest.raises(ValueError, match="mask shape"):
            apply_mask(spec, np.ones((2, 257)))

    def test_pointwise_under_permutation(self, spec, rng):
        mask = rng.uniform(0.05, 1.2, spec.shape)
        perm = rng.permutation(spec.magnitude.size)
        shuffle = lambda a: a.ravel()[perm].reshape(spec.shape)
        expected = shuffle(apply_mask(spec, mask).magnitude)
        permuted = Spectrogram(shuffle(spec.magnitude), shuffle(spec.phase), spec.config)
        np.testing.assert_array_equal(apply_mask(permuted, shuffle(mask)).magnitude, expected)
