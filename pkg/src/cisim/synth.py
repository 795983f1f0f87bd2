"""Deterministic speech-shaped test signals and babble-like noise.

These are substitutes for a real corpus when exercising the evaluation chain:
syllable-rate amplitude modulation, a harmonic glottal source shaped by three
formant resonators, and occasional fricative noise bursts.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .audio import AudioBuffer

FS = 16000


def _resonator(x: np.ndarray, freq: float, bw: float, fs: int) -> np.ndarray:
    r = np.exp(-np.pi * bw / fs)
    theta = 2.0 * np.pi * freq / fs
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    b = [1.0 - r]
    return lfilter(b, a, x)


def _syllable(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    t = np.arange(n) / fs
    f0 = rng.uniform(100.0, 220.0) * (1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(1.5, 4.0) * t + rng.uniform(0, 6.3)))
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    n_harm = int(4000.0 / f0.max())
    src = sum(np.sin(k * phase) / k for k in range(1, n_harm + 1))
    out = np.zeros(n)
    for lo, hi, bw in ((300, 800, 80), (900, 2200, 120), (2400, 3200, 180)):
        out += _resonator(src, rng.uniform(lo, hi), bw, fs)
    if rng.random() < 0.3:
        sos = butter(4, [2000, 6500], btype="bandpass", fs=fs, output="sos")
        fric = sosfilt(sos, rng.standard_normal(n))
        out = out / (np.std(out) + 1e-12) + 0.6 * fric / (np.std(fric) + 1e-12)
    env = np.sin(np.pi * np.arange(n) / n) ** 0.7
    return out * env / (np.std(out) + 1e-12)


def speech_like(seed: int, duration: float = 3.0, fs: int = FS, level_rms: float = 0.05,
                lead_silence: float = 0.2) -> AudioBuffer:
    """A sentence-like signal: voiced syllables separated by short pauses."""
    rng = np.random.default_rng(seed)
    n_total = int(round(duration * fs))
    out = np.zeros(n_total)
    pos = int(lead_silence * fs)
    while pos < n_total - int(0.1 * fs):
        n = int(rng.uniform(0.12, 0.26) * fs)
        n = min(n, n_total - pos)
        out[pos:pos + n] += rng.uniform(0.5, 1.0) * _syllable(rng, n, fs)
        pos += n + int(rng.uniform(0.02, 0.12) * fs)
    # trailing pause keeps the last syllable inside the STFT coverage
    out[n_total - int(0.05 * fs):] = 0.0
    out *= level_rms / np.sqrt(np.mean(out ** 2))
    return AudioBuffer(out, fs)


def babble(seed: int, duration: float = 10.0, talkers: int = 6, fs: int = FS) -> AudioBuffer:
    """Sum of independent speech-like talkers with no leading silence."""
    rng = np.random.default_rng(seed)
    mix = np.zeros(int(round(duration * fs)))
    for _ in range(talkers):
        voice = speech_like(int(rng.integers(1 << 31)), duration, fs, lead_silence=0.0).samples
        mix += np.roll(voice, int(rng.integers(mix.size)))
    mix *= 0.05 / np.sqrt(np.mean(mix ** 2))
    return AudioBuffer(mix, fs)
