import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cisim.audio import AudioBuffer, rms
from cisim.errors import FilterDesignError, SampleRateMismatchError
from cisim.vocoder import (
    BandSpec,
    VocoderConfig,
    bandpass,
    default_vocoder_config,
    envelope,
    filterbank_response,
    vocode,
)
from conftest import sine

FS = 16000
CFG = default_vocoder_config(FS)
STEADY = slice(FS // 2, None)


def test_default_edges():
    edges = CFG.edges
    assert len(CFG.bands) == 16
    assert edges[0] == 80.0 and edges[-1] == 6000.0
    expected_ratio = math.exp(math.log(6000 / 80) / 16)
    assert abs(expected_ratio - 1.3098) < 1e-4
    np.testing.assert_allclose(np.array(edges[1:]) / np.array(edges[:-1]), expected_ratio, rtol=1e-12)
    for b in CFG.bands:
        assert b.center_hz == math.sqrt(b.low_hz * b.high_hz)
    assert (CFG.bp_order, CFG.env_cutoff_hz, CFG.env_order) == (4, 400.0, 4)


def test_config_invariants():
    with pytest.raises(FilterDesignError):
        VocoderConfig.from_edges(np.geomspace(100, 7000, 16))
    with pytest.raises(FilterDesignError):
        VocoderConfig.from_edges(np.geomspace(100, 8000, 17))
    with pytest.raises(FilterDesignError):
        BandSpec(300, 200)
    with pytest.raises(FilterDesignError):
        default_vocoder_config(8000)


@pytest.mark.parametrize("k", range(16))
def test_bandpass_passband_and_stopband(k):
    band = CFG.bands[k]
    x = sine(band.center_hz, 1.5)
    assert rms(bandpass(x, band).samples[STEADY]) >= 0.7 * rms(x)
    far = 4 * band.high_hz
    if far < FS / 2:
        y = sine(far, 1.5)
        assert rms(bandpass(y, band).samples[STEADY]) <= 0.1 * rms(y)
    for f in (2 * band.high_hz, band.low_hz / 2):
        if f < FS / 2:
            y = sine(f, 1.5)
            atten_db = 20 * math.log10(rms(bandpass(y, band).samples[STEADY]) / rms(y))
            assert atten_db < -20.0


def test_bandpass_zero_and_nyquist_error():
    z = AudioBuffer(np.zeros(1000), FS)
    assert not np.any(bandpass(z, CFG.bands[3]).samples)
    with pytest.raises(FilterDesignError):
        bandpass(z, BandSpec(7000, 8000))


def test_bandpass_linear(rng):
    x = AudioBuffer(rng.standard_normal(4000), FS)
    a = 3.25
    y1 = bandpass(x.with_samples(a * x.samples), CFG.bands[5]).samples
    y2 = a * bandpass(x, CFG.bands[5]).samples
    assert np.linalg.norm(y1 - y2) <= 1e-9 * np.linalg.norm(y2)


def test_envelope_dc_passthrough():
    env = envelope(AudioBuffer(np.full(FS, 0.4), FS)).samples
    assert abs(env[STEADY].mean() - 0.4) <= 0.004


def test_envelope_rectified_sine_mean():
    amp = 0.8
    env = envelope(sine(1000, 1.0, amp=amp)).samples
    assert abs(env[STEADY].mean() - 2 * amp / math.pi) <= 0.05 * 2 * amp / math.pi


def test_envelope_zero():
    assert not np.any(envelope(AudioBuffer(np.zeros(500), FS)).samples)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(1e-4, 10.0))
def test_vocode_preserves_rms(seed, scale):
    x = AudioBuffer(np.random.default_rng(seed).standard_normal(3000) * scale, FS)
    y = vocode(x, CFG)
    assert abs(rms(y) - rms(x)) / rms(x) < 1e-6


def test_vocode_tone_lands_in_its_band():
    for k in (2, 8, 13):
        band = CFG.bands[k]
        y = vocode(sine(band.center_hz, 1.5), CFG).samples[STEADY]
        spec = np.abs(np.fft.rfft(y)) ** 2
        f = np.fft.rfftfreq(y.size, 1 / FS)
        inside = (f >= band.low_hz) & (f <= band.high_hz)
        assert spec[inside].sum() / spec.sum() >= 0.8


def test_vocode_zero_and_deterministic(rng):
    z = vocode(AudioBuffer(np.zeros(2000), FS), CFG)
    assert not np.any(z.samples)
    x = AudioBuffer(rng.standard_normal(2000), FS)
    np.testing.assert_array_equal(vocode(x, CFG).samples, vocode(x, CFG).samples)


def test_vocode_rate_mismatch():
    with pytest.raises(SampleRateMismatchError):
        vocode(AudioBuffer(np.ones(100), 22050), CFG)


def test_filterbank_has_no_dead_zones():
    freqs = np.geomspace(200, 5000, 400)
    total = filterbank_response(CFG, freqs).sum(axis=0)
    assert total.min() >= 0.5 and total.max() <= 1.5
