"""16-channel tone vocoder for cochlear-implant simulation.

Each channel band-pass filters the input, extracts the envelope by full-wave
rectification and low-pass smoothing, and modulates a sine carrier at the
band's geometric centre. The channel outputs are summed and rescaled to the
input RMS. No amplitude compression is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy.signal import butter, sosfilt, sosfreqz

from .audio import AudioBuffer, rms
from .errors import FilterDesignError, InvalidAudioError, SampleRateMismatchError

N_CHANNELS = 16
LOW_EDGE_HZ = 80.0
HIGH_EDGE_HZ = 6000.0


@dataclass(frozen=True)
class BandSpec:
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0.0 < self.low_hz < self.high_hz:
            raise FilterDesignError(f"invalid band edges {self.low_hz}..{self.high_hz} Hz")

    @property
    def center_hz(self) -> float:
        return math.sqrt(self.low_hz * self.high_hz)


@dataclass(frozen=True)
class VocoderConfig:
    bands: Tuple[BandSpec, ...]
    sample_rate: int = 16000
    bp_order: int = 4
    env_cutoff_hz: float = 400.0
    env_order: int = 4

    def __post_init__(self):
        bands = tuple(self.bands)
        object.__setattr__(self, "bands", bands)
        if len(bands) != N_CHANNELS:
            raise FilterDesignError(f"vocoder needs exactly {N_CHANNELS} bands, got {len(bands)}")
        for lo, hi in zip(bands, bands[1:]):
            if not math.isclose(lo.high_hz, hi.low_hz, rel_tol=1e-12):
                raise FilterDesignError(f"bands not contiguous at {lo.high_hz} / {hi.low_hz} Hz")
        nyquist = self.sample_rate / 2.0
        if bands[-1].high_hz >= nyquist:
            raise FilterDesignError(f"top edge {bands[-1].high_hz} Hz is not below Nyquist {nyquist} Hz")
        if not 0.0 < self.env_cutoff_hz < nyquist:
            raise FilterDesignError(f"envelope cutoff {self.env_cutoff_hz} Hz out of range")
        if self.bp_order < 1 or self.env_order < 1:
            raise FilterDesignError("filter orders must be positive")

    @classmethod
    def from_edges(cls, edges: Sequence[float], sample_rate: int = 16000, **kwargs) -> "VocoderConfig":
        edges = [float(e) for e in edges]
        return cls(tuple(BandSpec(lo, hi) for lo, hi in zip(edges, edges[1:])), sample_rate, **kwargs)

    @property
    def edges(self) -> list:
        return [b.low_hz for b in self.bands] + [self.bands[-1].high_hz]

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center_hz for b in self.bands])


def default_vocoder_config(sample_rate: int = 16000) -> VocoderConfig:
    """Log-spaced 80-6000 Hz bands, 4th-order Butterworth prototypes, 400 Hz envelopes."""
    if sample_rate < 16000:
        raise FilterDesignError(f"default vocoder needs at least 16 kHz, got {sample_rate}")
    ratio = HIGH_EDGE_HZ / LOW_EDGE_HZ
    edges = [LOW_EDGE_HZ * ratio ** (k / N_CHANNELS) for k in range(N_CHANNELS + 1)]
    edges[-1] = HIGH_EDGE_HZ
    return VocoderConfig.from_edges(edges, sample_rate)


@lru_cache(maxsize=256)
def bandpass_sos(low_hz: float, high_hz: float, order: int, sample_rate: int) -> np.ndarray:
    """Second-order sections of a Butterworth band-pass (``2 * order`` poles)."""
    if not 0.0 < low_hz < high_hz < sample_rate / 2.0:
        raise FilterDesignError(f"band {low_hz}..{high_hz} Hz invalid at {sample_rate} Hz")
    sos = butter(order, [low_hz, high_hz], btype="bandpass", fs=sample_rate, output="sos")
    _check_stable(sos)
    return sos


@lru_cache(maxsize=64)
def lowpass_sos(cutoff_hz: float, order: int, sample_rate: int) -> np.ndarray:
    if not 0.0 < cutoff_hz < sample_rate / 2.0:
        raise FilterDesignError(f"cutoff {cutoff_hz} Hz invalid at {sample_rate} Hz")
    sos = butter(order, cutoff_hz, btype="lowpass", fs=sample_rate, output="sos")
    _check_stable(sos)
    return sos


def _check_stable(sos: np.ndarray) -> None:
    if not np.all(np.isfinite(sos)):
        raise FilterDesignError("filter design produced non-finite coefficients")
    for section in sos:
        poles = np.roots(section[3:])
        if np.any(np.abs(poles) >= 1.0 - 1e-12):
            raise FilterDesignError("filter design is unstable (edges too close to 0 or Nyquist)")


def bandpass(buf: AudioBuffer, band: BandSpec, order: int = 4) -> AudioBuffer:
    """Causal Butterworth band-pass realised as cascaded biquads."""
    sos = bandpass_sos(band.low_hz, band.high_hz, int(order), buf.sample_rate)
    return buf.with_samples(sosfilt(sos, buf.samples))


def envelope(buf: AudioBuffer, cutoff_hz: float = 400.0, order: int = 4) -> AudioBuffer:
    """Full-wave rectify, low-pass, and floor at zero."""
    sos = lowpass_sos(float(cutoff_hz), int(order), buf.sample_rate)
    env = sosfilt(sos, np.abs(buf.samples))
    return buf.with_samples(np.maximum(env, 0.0))


def band_envelopes(buf: AudioBuffer, cfg: VocoderConfig) -> np.ndarray:
    """Per-channel envelopes, shape (16, len(buf))."""
    if buf.sample_rate != cfg.sample_rate:
        raise SampleRateMismatchError(f"buffer at {buf.sample_rate} Hz, vocoder designed for {cfg.sample_rate} Hz")
    out = np.empty((len(cfg.bands), len(buf)))
    for k, band in enumerate(cfg.bands):
        out[k] = envelope(bandpass(buf, band, cfg.bp_order), cfg.env_cutoff_hz, cfg.env_order).samples
    return out


def vocode(buf: AudioBuffer, cfg: VocoderConfig) -> AudioBuffer:
    """Tone-vocode ``buf``; the output has the same RMS as the input.

    Silent input returns silence.
    """
    if len(buf) == 0:
        raise InvalidAudioError("cannot vocode an empty buffer")
    envs = band_envelopes(buf, cfg)
    t = np.arange(len(buf)) / cfg.sample_rate
    carriers = np.sin(2.0 * np.pi * cfg.centers[:, None] * t[None, :])
    out = np.sum(envs * carriers, axis=0)
    in_rms = rms(buf)
    out_rms = rms(out)
    if in_rms == 0.0 or out_rms == 0.0:
        return buf.with_samples(np.zeros(len(buf)))
    return buf.with_samples(out * (in_rms / out_rms))


def filterbank_response(cfg: VocoderConfig, freqs_hz) -> np.ndarray:
    """Magnitude response of every analysis band at ``freqs_hz``, shape (16, len(freqs))."""
    freqs_hz = np.asarray(freqs_hz, dtype=np.float64)
    resp = np.empty((len(cfg.bands), freqs_hz.size))
    for k, band in enumerate(cfg.bands):
        sos = bandpass_sos(band.low_hz, band.high_hz, cfg.bp_order, cfg.sample_rate)
        _, h = sosfreqz(sos, worN=freqs_hz, fs=cfg.sample_rate)
        resp[k] = np.abs(h)
    return resp
