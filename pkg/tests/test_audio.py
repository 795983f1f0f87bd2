import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cisim.audio import AudioBuffer, MixSpec, mix_at_snr, read_wav, resample, rms, write_wav
from cisim.errors import (
    InvalidAudioError,
    SampleRateMismatchError,
    SilentSignalError,
    WavEncodingError,
    WavHeaderError,
    WavNotFoundError,
)
from conftest import sine


def _write_pcm16(path, frames, rate=16000):
    frames = np.asarray(frames, dtype="<i2")
    channels = 1 if frames.ndim == 1 else frames.shape[1]
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(frames.tobytes())


def _riff(fmt_tag, channels, rate, bits, payload):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_read_pcm16_mono(tmp_path):
    _write_pcm16(tmp_path / "a.wav", np.arange(160) - 80)
    buf = read_wav(tmp_path / "a.wav")
    assert len(buf) == 160 and buf.sample_rate == 16000


def test_read_stereo_is_averaged(tmp_path):
    frames = np.zeros((50, 2))
    frames[:, 0] = 16384
    _write_pcm16(tmp_path / "s.wav", frames)
    buf = read_wav(tmp_path / "s.wav")
    np.testing.assert_array_equal(buf.samples, 0.25)


def test_read_stereo_float_channels_one_and_zero(tmp_path):
    payload = np.tile(np.array([1.0, 0.0], dtype="<f4"), 40).tobytes()
    (tmp_path / "f.wav").write_bytes(_riff(3, 2, 16000, 32, payload))
    np.testing.assert_array_equal(read_wav(tmp_path / "f.wav").samples, 0.5)


def test_int16_full_scale_scaling(tmp_path):
    _write_pcm16(tmp_path / "m.wav", [32767, -32768, 0])
    s = read_wav(tmp_path / "m.wav").samples
    assert s[0] == 32767 / 2 ** 15
    assert abs(s[0] - 0.99997) < 1e-5
    assert s[1] == -1.0 and s[2] == 0.0


def test_read_errors_are_distinct(tmp_path):
    with pytest.raises(WavNotFoundError):
        read_wav(tmp_path / "missing.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(WavHeaderError):
        read_wav(tmp_path / "junk.wav")
    (tmp_path / "pcm24.wav").write_bytes(_riff(1, 1, 16000, 24, b"\x00" * 30))
    with pytest.raises(WavEncodingError):
        read_wav(tmp_path / "pcm24.wav")
    no_data = _riff(1, 1, 16000, 16, b"")[:-8]
    (tmp_path / "nodata.wav").write_bytes(no_data)
    with pytest.raises(WavHeaderError):
        read_wav(tmp_path / "nodata.wav")


def test_write_read_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 1000)
    write_wav(AudioBuffer(x, 16000), tmp_path / "r.wav")
    y = read_wav(tmp_path / "r.wav").samples
    assert np.max(np.abs(x - y)) <= 2 ** -15


def test_write_clips_and_silence(tmp_path):
    write_wav(AudioBuffer([2.0, -3.0, 0.0], 16000), tmp_path / "c.wav")
    with wave.open(str(tmp_path / "c.wav")) as fh:
        codes = np.frombuffer(fh.readframes(3), dtype="<i2")
    assert codes.tolist() == [32767, -32768, 0]
    write_wav(AudioBuffer(np.zeros(10), 16000), tmp_path / "z.wav")
    with wave.open(str(tmp_path / "z.wav")) as fh:
        assert not np.any(np.frombuffer(fh.readframes(10), dtype="<i2"))
    with pytest.raises(InvalidAudioError):
        write_wav(AudioBuffer(np.zeros(0), 16000), tmp_path / "e.wav")


def test_audio_buffer_invariants():
    with pytest.raises(InvalidAudioError):
        AudioBuffer([0.0, np.nan], 16000)
    with pytest.raises(InvalidAudioError):
        AudioBuffer([0.0], 0)


def test_resample_identity_and_length():
    buf = sine(440, 1.0)
    assert resample(buf, 16000) is buf
    x = sine(440, 1.0, fs=48000)
    assert len(resample(x, 16000)) == 16000


def test_resample_preserves_tone_frequency():
    y = resample(sine(440, 1.0, fs=48000), 16000)
    spec = np.abs(np.fft.rfft(y.samples[:4096] * np.hanning(4096)))
    peak_hz = np.argmax(spec) * 16000 / 4096
    assert abs(peak_hz - 440) <= 16000 / 4096


def test_resample_round_trip_band_limited(rng):
    t = np.arange(16000) / 16000
    x = sum(rng.uniform(0.1, 0.3) * np.sin(2 * np.pi * f * t + rng.uniform(0, 6)) for f in rng.uniform(50, 3900, 12))
    buf = AudioBuffer(x, 16000)
    back = resample(resample(buf, 48000), 16000).samples
    interior = slice(500, -500)
    err = np.linalg.norm(back[interior] - x[interior]) / np.linalg.norm(x[interior])
    assert err < 1e-3


def test_rms_values():
    assert rms(AudioBuffer(np.zeros(10), 8000)) == 0.0
    assert rms(AudioBuffer(np.full(10, 0.5), 8000)) == 0.5
    assert abs(rms(sine(100, 1.0)) - 1 / math.sqrt(2)) < 1e-9
    with pytest.raises(InvalidAudioError):
        rms(AudioBuffer(np.zeros(0), 8000))


def test_mix_unit_rms_zero_db():
    n = 16000
    clean = AudioBuffer(np.sqrt(2) * np.sin(2 * np.pi * 100 * np.arange(n) / n), 16000)
    noise = AudioBuffer(np.sqrt(2) * np.sin(2 * np.pi * 37 * np.arange(n) / n), 16000)
    noisy, scaled = mix_at_snr(clean, noise, MixSpec(0.0, 3))
    assert abs(rms(scaled) - 1.0) < 1e-12
    np.testing.assert_allclose(noisy.samples, clean.samples + scaled.samples)


def test_mix_hundred_db_is_nearly_clean(rng):
    clean = AudioBuffer(rng.standard_normal(4000) * 0.1, 16000)
    noise = AudioBuffer(rng.standard_normal(8000), 16000)
    noisy, _ = mix_at_snr(clean, noise, MixSpec(100.0, 1))
    assert np.max(np.abs(noisy.samples - clean.samples)) < 1e-4


def test_mix_wraps_short_noise_and_is_deterministic(rng):
    clean = AudioBuffer(rng.standard_normal(5000), 16000)
    noise = AudioBuffer(rng.standard_normal(1200), 16000)
    a = mix_at_snr(clean, noise, MixSpec(-4.0, 9))[0].samples
    b = mix_at_snr(clean, noise, MixSpec(-4.0, 9))[0].samples
    np.testing.assert_array_equal(a, b)


def test_mix_errors(rng):
    clean = AudioBuffer(rng.standard_normal(100), 16000)
    with pytest.raises(SampleRateMismatchError):
        mix_at_snr(clean, AudioBuffer(rng.standard_normal(100), 8000), MixSpec(0.0))
    with pytest.raises(SilentSignalError):
        mix_at_snr(AudioBuffer(np.zeros(100), 16000), clean, MixSpec(0.0))
    with pytest.raises(SilentSignalError):
        mix_at_snr(clean, AudioBuffer(np.zeros(100), 16000), MixSpec(0.0))
    with pytest.raises(InvalidAudioError):
        MixSpec(float("inf"))


@settings(max_examples=40, deadline=None)
@given(
    snr=st.floats(-30, 30),
    seed=st.integers(0, 2 ** 32),
    noise_seed=st.integers(0, 2 ** 63),
)
def test_mix_achieves_requested_snr(snr, seed, noise_seed):
    r = np.random.default_rng(seed)
    clean = AudioBuffer(r.standard_normal(800) * r.uniform(0.01, 1), 16000)
    noise = AudioBuffer(r.standard_normal(int(r.integers(200, 2000))) * r.uniform(0.01, 1), 16000)
    _, scaled = mix_at_snr(clean, noise, MixSpec(snr, noise_seed))
    achieved = 20 * math.log10(rms(clean) / rms(scaled))
    assert abs(achieved - snr) < 1e-6


def test_protocol_grid_snrs(rng):
    clean = AudioBuffer(rng.standard_normal(1600), 16000)
    noise = AudioBuffer(rng.standard_normal(3200), 16000)
    for snr in (-7, -4, -1, 2, 5, 8):
        _, scaled = mix_at_snr(clean, noise, MixSpec(snr, 0))
        assert abs(20 * math.log10(rms(clean) / rms(scaled)) - snr) < 1e-9
