import stat
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from surrogate_se.dsp import Utterance
from surrogate_se.metrics import (
    PESQ_ENV_VAR, PESQ_SPEC, STOI_SPEC, LookupMetric, MetricSpec, MetricUnavailableError, RecordingMetric,
    ScoreReport, ScoreRow, denormalize_score, evaluate_corpus, get_metric, normalize_score, pesq_raw,
    synthetic_oracle, waveform_key,
)

try:
    import pesq  # noqa: F401
    HAVE_PESQ = True
except ImportError:
    HAVE_PESQ = False


def _speechlike(rng, n=32000):
    t = np.arange(n) / 16000
    env = 0.5 * (1 - np.cos(2 * np.pi * 3 * t))
    x = sum(np.sin(2 * np.pi * f * t) / k for k, f in enumerate([180, 360, 540, 900, 1400], 1))
    return 0.2 * env * x + 0.002 * rng.standard_normal(n)


class TestNormalize:
    @pytest.mark.parametrize("raw, q", [(4.5, 1.0), (-0.5, 0.0), (2.0, 0.5)])
    def test_pesq_endpoints(self, raw, q):
        assert normalize_score(raw, PESQ_SPEC) == pytest.approx(q, abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(ValueError, match="degenerate"):
            MetricSpec("bad", 1.0, 1.0)

    def test_marginal_overshoot_clamped(self, caplog):
        assert normalize_score(4.64, PESQ_SPEC) == 1.0
        assert "clamping" in caplog.text

    def test_far_outside_rejected(self):
        with pytest.raises(ValueError, match="far outside"):
            normalize_score(17.0, PESQ_SPEC)

    @given(st.floats(-0.5, 4.5))
    def test_inverse(self, raw):
        assert denormalize_score(normalize_score(raw, PESQ_SPEC), PESQ_SPEC) == pytest.approx(raw, abs=1e-12)

    @given(st.floats(-0.5, 4.5), st.floats(-0.5, 4.5))
    def test_monotone(self, a, b):
        if a < b - 1e-9:
            assert normalize_score(a, PESQ_SPEC) < normalize_score(b, PESQ_SPEC)

    def test_stoi_identity(self):
        assert normalize_score(0.73, STOI_SPEC) == pytest.approx(0.73)


class TestSyntheticOracle:
    def test_identical(self, rng):
        y = rng.normal(size=1000)
        assert synthetic_oracle(y, y) == 1.0

    def test_zero_estimate(self, rng):
        y = rng.normal(size=1000)
        assert synthetic_oracle(np.zeros(1000), y) == pytest.approx(np.exp(-1.0), rel=1e-9)
        assert np.exp(-1.0) == pytest.approx(0.367879441171442, rel=1e-14)

    def test_monotone_in_error(self, rng):
        y, d = rng.normal(size=500), rng.normal(size=500)
        assert synthetic_oracle(y + 2 * d, y) < synthetic_oracle(y + d, y) < 1.0

    def test_truncates_to_common_length(self, rng):
        y = rng.normal(size=800)
        assert synthetic_oracle(np.concatenate([y, rng.normal(size=50)]), y) == 1.0

    @given(st.integers(0, 10_000))
    def test_range(self, seed):
        r = np.random.default_rng(seed)
        q = synthetic_oracle(r.normal(size=64), r.normal(size=64))
        assert 0.0 < q <= 1.0


class TestPesqAdapter:
    def test_too_short(self):
        with pytest.raises(ValueError, match="too short"):
            pesq_raw(np.zeros(3000), np.zeros(3000))

    def test_missing_adapter(self, monkeypatch):
        monkeypatch.delenv(PESQ_ENV_VAR, raising=False)
        monkeypatch.setitem(sys.modules, "pesq", None)
        with pytest.raises(MetricUnavailableError):
            pesq_raw(np.ones(8000), np.ones(8000))

    def test_external_command(self, tmp_path, monkeypatch, rng):
        script = tmp_path / "fake_pesq"
        script.write_text(
            f"#!{sys.executable}\n"
            "import sys, wave\n"
            "for p in sys.argv[1:3]:\n"
            "    with wave.open(p) as w: assert w.getframerate() == 16000 and w.getnchannels() == 1\n"
            "print('score:', 3.25 if sys.argv[3] == 'wb' else 2.5)\n"
        )
        script.chmod(script.stat().st_mode | stat.S_IEXEC)
        monkeypatch.setenv(PESQ_ENV_VAR, str(script))
        x = 0.1 * rng.standard_normal(8000)
        assert pesq_raw(x, x) == 3.25
        assert pesq_raw(x, x, mode="nb") == 2.5
        assert get_metric("pesq")(x, x) == pytest.approx(0.75)

    def test_external_command_failure(self, tmp_path, monkeypatch):
        script = tmp_path / "broken"
        script.write_text(f"#!{sys.executable}\nimport sys\nsys.exit(3)\n")
        script.chmod(script.stat().st_mode | stat.S_IEXEC)
        monkeypatch.setenv(PESQ_ENV_VAR, str(script))
        with pytest.raises(RuntimeError, match="failed"):
            pesq_raw(np.ones(8000), np.ones(8000))

    @pytest.mark.skipif(not HAVE_PESQ, reason="pesq package not installed")
    def test_identical_near_ceiling(self, monkeypatch, rng):
        monkeypatch.delenv(PESQ_ENV_VAR, raising=False)
        y = _speechlike(rng)
        assert get_metric("pesq")(y, y) >= 0.98

    @pytest.mark.skipif(not HAVE_PESQ, reason="pesq package not installed")
    def test_degraded_scores_lower(self, monkeypatch, rng):
        monkeypatch.delenv(PESQ_ENV_VAR, raising=False)
        y = _speechlike(rng)
        noise = rng.standard_normal(y.size)
        noise *= np.sqrt(np.mean(y**2) / np.mean(noise**2))
        metric = get_metric("pesq")
        assert metric(y + noise, y) < metric(y, y)


class TestRegistry:
    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown metric"):
            get_metric("wer")

    def test_stoi_unavailable_or_scores(self, rng):
        m = get_metric("stoi")
        y = _speechlike(rng)
        try:
            q = m(y, y)
        except MetricUnavailableError:
            return
        assert q > 0.9


class TestLookup:
    def test_replays_recorded_scores(self, rng):
        rec = RecordingMetric(get_metric("synthetic"))
        a, b = rng.normal(size=100), rng.normal(size=100)
        q = rec(a, b)
        replay = LookupMetric(rec.spec, rec.table)
        assert replay(a, b) == q
        with pytest.raises(KeyError):
            replay(b, a)

    def test_key_depends_on_content(self, rng):
        a = rng.normal(size=10)
        assert waveform_key(a, a) != waveform_key(a + 1e-12, a)


class TestEvaluateCorpus:
    def _pair(self, uid, rng, noise):
        y = rng.normal(size=400)
        return Utterance(uid, y + noise * rng.normal(size=400)), Utterance(uid, y)

    def test_single(self, rng):
        e, y = self._pair("a", rng, 0.3)
        r = evaluate_corpus([(e, y)], get_metric("synthetic"))
        assert r.mean_normalized == r.rows[0].normalized == synthetic_oracle(e, y)

    def test_two_means(self):
        r = ScoreReport("x", [ScoreRow("a", 0.4, 0.4), ScoreRow("b", 0.6, 0.6)])
        assert r.mean_raw == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate_corpus([], get_metric("synthetic"))

    def test_sorted_and_mean_matches_rows(self, rng, tmp_path):
        pairs = [self._pair(uid, rng, n) for uid, n in [("c", 0.1), ("a", 0.5), ("b", 0.9)]]
        r = evaluate_corpus(pairs, get_metric("synthetic"), n_jobs=2)
        assert [row.id for row in r.rows] == ["a", "b", "c"]
        assert r.mean_normalized == pytest.approx(sum(row.normalized for row in r.rows) / 3, abs=1e-15)
        text = r.to_csv(tmp_path / "r.csv").read_text().splitlines()
        assert text[0] == "id,synthetic_raw,synthetic_normalized"
        assert text[-1].startswith("mean,")

    def test_extra_metrics_reported(self, rng):
        pairs = [self._pair("a", rng, 0.2)]
        r = evaluate_corpus(pairs, get_metric("synthetic"), extra_metrics={"csig": lambda e, y: 3.5})
        assert r.extra_means() == {"csig": 3.5}
