import numpy as np
import pytest

from cisim.audio import AudioBuffer, MixSpec, mix_at_snr
from cisim.enhancers import (
    LogMmseState,
    OracleContext,
    irm_oracle,
    load_external_mask,
    logmmse_enhance,
    oracle_context,
)
from cisim.errors import MaskFormatError, MaskTruncatedError, ShapeMismatchError, SignalTooShortError
from cisim.spectral import FeatureMatrix, StftConfig, enhance_with_mask, write_mask
from cisim import synth

FS = 16000


def _feat_from_mag(mag):
    return FeatureMatrix(np.log1p(mag))


def test_irm_clean_only(rng):
    s = rng.uniform(0.01, 5, size=(20, 257))
    m = irm_oracle(OracleContext(_feat_from_mag(s), _feat_from_mag(np.zeros_like(s))))
    assert np.all(m.values >= 1 - 1e-9)


def test_irm_noise_only(rng):
    n = rng.uniform(0.01, 5, size=(20, 257))
    m = irm_oracle(OracleContext(_feat_from_mag(np.zeros_like(n)), _feat_from_mag(n)))
    assert np.all(m.values <= 1e-9)


def test_irm_equal_components(rng):
    s = rng.uniform(0.05, 5, size=(20, 257))
    m = irm_oracle(OracleContext(_feat_from_mag(s), _feat_from_mag(s)))
    np.testing.assert_allclose(m.values, 0.5, atol=1e-9)


def test_irm_scale_invariant(rng):
    s = rng.uniform(0.05, 5, size=(10, 33))
    n = rng.uniform(0.05, 5, size=(10, 33))
    a = irm_oracle(OracleContext(_feat_from_mag(s), _feat_from_mag(n))).values
    b = irm_oracle(OracleContext(_feat_from_mag(3.7 * s), _feat_from_mag(3.7 * n))).values
    assert np.all((a >= 0) & (a <= 1))
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_irm_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        OracleContext(FeatureMatrix(np.zeros((2, 3))), FeatureMatrix(np.zeros((3, 3))))


def test_irm_converges_to_noisy_at_high_snr(speech, rng):
    noise = AudioBuffer(rng.standard_normal(len(speech)), FS)
    noisy, scaled = mix_at_snr(speech, noise, MixSpec(120.0, 0))
    ctx = oracle_context(speech, scaled)
    mask = irm_oracle(ctx)
    # silent cells stay at 0 (pure noise); wherever speech is present the mask tends to 1
    speech_cells = np.expm1(ctx.clean_feat.values) > 1e-2
    assert mask.values[speech_cells].min() > 0.999
    out = enhance_with_mask(noisy, mask).samples
    sl = slice(512, len(out) - 1024)
    err = np.linalg.norm(out[sl] - noisy.samples[sl]) / np.linalg.norm(noisy.samples[sl])
    assert err < 1e-3


def _noise_lead_sine(rng, snr_db, lead_s=0.3, dur=3.0, freq=1000.0):
    n = int(dur * FS)
    t = np.arange(n) / FS
    tone = np.sin(2 * np.pi * freq * t)
    tone[: int(lead_s * FS)] = 0.0
    noise = rng.standard_normal(n)
    active = slice(int(lead_s * FS), n)
    noise *= np.sqrt(np.mean(tone[active] ** 2) / np.mean(noise[active] ** 2)) * 10 ** (-snr_db / 20)
    return tone, noise


def _band_snr(x, freq=1000.0, half_width_hz=40.0):
    spec = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
    f = np.fft.rfftfreq(x.size, 1 / FS)
    band = np.abs(f - freq) <= half_width_hz
    return 10 * np.log10(spec[band].sum() / spec[~band].sum())


def test_logmmse_suppresses_stationary_noise(rng):
    x = AudioBuffer(0.1 * rng.standard_normal(3 * FS), FS)
    y, mask = logmmse_enhance(x)
    half = slice(len(x) // 2, len(x) - 512)
    ratio_db = 10 * np.log10(np.mean(y.samples[half] ** 2) / np.mean(x.samples[half] ** 2))
    assert ratio_db <= -15.0
    assert np.all((mask.values >= 10 ** (-25 / 20) - 1e-12) & (mask.values <= 1.0))


def test_logmmse_transparent_at_high_snr(speech, rng):
    noise = AudioBuffer(rng.standard_normal(len(speech)), FS)
    noisy, _ = mix_at_snr(speech, noise, MixSpec(100.0, 0))
    y, _ = logmmse_enhance(noisy)
    err = np.linalg.norm(y.samples - noisy.samples) / np.linalg.norm(noisy.samples)
    assert err < 0.05


def test_logmmse_improves_sine_band_snr(rng):
    tone, noise = _noise_lead_sine(rng, 0.0)
    x = AudioBuffer(tone + noise, FS)
    y, _ = logmmse_enhance(x)
    sl = slice(int(0.5 * FS), len(x) - 512)
    gain = _band_snr(y.samples[sl]) - _band_snr(x.samples[sl])
    assert gain >= 5.0


def test_logmmse_deterministic_and_finite(rng):
    x = AudioBuffer(rng.standard_normal(8000), FS)
    a, ma = logmmse_enhance(x)
    b, mb = logmmse_enhance(x)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.all(np.isfinite(a.samples))
    silent, _ = logmmse_enhance(AudioBuffer(np.zeros(8000), FS))
    assert np.all(np.isfinite(silent.samples)) and not np.any(silent.samples)


def test_logmmse_too_short():
    cfg = StftConfig()
    n = cfg.fft_size + 4 * cfg.hop  # five frames
    with pytest.raises(SignalTooShortError):
        logmmse_enhance(AudioBuffer(np.ones(n), FS))


def test_logmmse_state_invariants():
    with pytest.raises(ValueError):
        LogMmseState(np.ones(3), np.zeros(3), alpha=1.0)
    with pytest.raises(ValueError):
        LogMmseState(-np.ones(3), np.zeros(3))


def test_external_mask_round_trip(tmp_path, rng):
    vals = rng.uniform(size=(12, 257)).astype(np.float32)
    write_mask(vals, tmp_path / "u.civm")
    m = load_external_mask(tmp_path / "u.civm", (12, 257))
    assert m.values.astype(np.float32).tobytes() == vals.tobytes()
    assert m.clamped == 0


def test_external_mask_clamp_count(tmp_path):
    vals = np.full((2, 3), 0.5, dtype=np.float32)
    vals[1, 2] = 1.5
    write_mask(vals, tmp_path / "u.civm")
    m = load_external_mask(tmp_path / "u.civm", (2, 3))
    assert m.values[1, 2] == 1.0 and m.clamped == 1


def test_external_mask_errors(tmp_path):
    write_mask(np.ones((2, 3)), tmp_path / "u.civm")
    with pytest.raises(ShapeMismatchError):
        load_external_mask(tmp_path / "u.civm", (3, 2))
    raw = (tmp_path / "u.civm").read_bytes()
    (tmp_path / "bad.civm").write_bytes(b"CIVX" + raw[4:])
    with pytest.raises(MaskFormatError):
        load_external_mask(tmp_path / "bad.civm", (2, 3))
    (tmp_path / "short.civm").write_bytes(raw[:-4])
    with pytest.raises(MaskTruncatedError):
        load_external_mask(tmp_path / "short.civm", (2, 3))
