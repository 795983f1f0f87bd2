"""Objective intelligibility scores and paired statistics.

``stoi`` follows the classic short-time objective intelligibility measure
(10 kHz, one-third-octave envelopes, 384 ms segments). ``ncm`` is the
normalized covariance metric computed on the vocoder's 16-band envelope
decomposition with uniform band weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy.special import betainc

from .audio import AudioBuffer, resample
from .errors import (
    InvalidAudioError,
    SampleRateMismatchError,
    SignalTooShortError,
    SilentSignalError,
    ZeroVarianceError,
)
from .vocoder import VocoderConfig, band_envelopes

STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0

NCM_ENV_RATE = 1000
NCM_SNR_RANGE_DB = 15.0

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class MetricScore:
    name: str
    value: float
    range: Tuple[float, float]

    def __post_init__(self):
        lo, hi = self.range
        if not lo - 1e-12 <= self.value <= hi + 1e-12:
            raise ValueError(f"{self.name} value {self.value} outside {self.range}")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class TTestResult:
    t_value: float
    dof: int
    p_value: float


def _paired(clean: AudioBuffer, degraded: AudioBuffer):
    if clean.sample_rate != degraded.sample_rate:
        raise SampleRateMismatchError(f"{clean.sample_rate} Hz vs {degraded.sample_rate} Hz")
    n = min(len(clean), len(degraded))
    return clean.with_samples(clean.samples[:n]), degraded.with_samples(degraded.samples[:n])


def _stoi_window() -> np.ndarray:
    return np.hanning(STOI_FRAME + 2)[1:-1]


@lru_cache(maxsize=4)
def third_octave_matrix(fs: int = STOI_FS, nfft: int = STOI_NFFT, n_bands: int = STOI_BANDS,
                        min_freq: float = STOI_MIN_FREQ) -> np.ndarray:
    """Binary (bands x bins) matrix grouping FFT bins into one-third-octave bands."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands, dtype=np.float64)
    low = min_freq * 2.0 ** ((2 * k - 1) / 6)
    high = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((n_bands, f.size))
    for i in range(n_bands):
        lo_idx = int(np.argmin((f - low[i]) ** 2))
        hi_idx = int(np.argmin((f - high[i]) ** 2))
        obm[i, lo_idx:hi_idx] = 1.0
    obm.setflags(write=False)
    return obm


def _frames(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    n = (x.size - size) // hop + 1
    idx = np.arange(size)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def remove_silent_frames(x: np.ndarray, y: np.ndarray, dyn_range: float = STOI_DYN_RANGE_DB,
                         size: int = STOI_FRAME, hop: int = STOI_FRAME // 2):
    """Drop frames whose clean energy is more than ``dyn_range`` dB below the loudest clean frame."""
    w = _stoi_window()
    xf = _frames(x, size, hop) * w
    yf = _frames(y, size, hop) * w
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = (energy.max() - dyn_range - energy) < 0
    xf, yf = xf[keep], yf[keep]
    n = xf.shape[0]
    out_len = (n - 1) * hop + size if n else 0
    xs, ys = np.zeros(out_len), np.zeros(out_len)
    for i in range(n):
        xs[i * hop:i * hop + size] += xf[i]
        ys[i * hop:i * hop + size] += yf[i]
    return xs, ys


def _third_octave_envelopes(x: np.ndarray) -> np.ndarray:
    frames = _frames(x, STOI_FRAME, STOI_FRAME // 2) * _stoi_window()
    spec = np.fft.rfft(frames, n=STOI_NFFT, axis=1)
    return np.sqrt(third_octave_matrix() @ (np.abs(spec) ** 2).T)


def stoi(clean: AudioBuffer, degraded: AudioBuffer) -> MetricScore:
    clean, degraded = _paired(clean, degraded)
    x = resample(clean, STOI_FS).samples
    y = resample(degraded, STOI_FS).samples
    if x.size < STOI_FRAME or not np.any(x):
        raise SilentSignalError("clean signal is silent or shorter than one frame")
    x, y = remove_silent_frames(x, y)
    if x.size < STOI_FRAME:
        raise SilentSignalError("no active frames left in the clean signal")

    x_tob = _third_octave_envelopes(x)
    y_tob = _third_octave_envelopes(y)
    n_frames = x_tob.shape[1]
    if n_frames < STOI_SEGMENT:
        raise SignalTooShortError(
            f"{n_frames} active frames; STOI needs at least {STOI_SEGMENT} (about 384 ms of speech)"
        )

    # segments[m] covers frames m .. m+N-1, shape (M, bands, N)
    idx = np.arange(STOI_SEGMENT)[None, :] + np.arange(n_frames - STOI_SEGMENT + 1)[:, None]
    xs = x_tob[:, idx].transpose(1, 0, 2)
    ys = y_tob[:, idx].transpose(1, 0, 2)

    alpha = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 1.0 + 10.0 ** (-STOI_BETA_DB / 20.0)
    yp = np.minimum(ys * alpha, xs * clip)

    xs = xs - xs.mean(axis=2, keepdims=True)
    yp = yp - yp.mean(axis=2, keepdims=True)
    xs = xs / (np.linalg.norm(xs, axis=2, keepdims=True) + _EPS)
    yp = yp / (np.linalg.norm(yp, axis=2, keepdims=True) + _EPS)
    value = float(np.mean(np.sum(xs * yp, axis=2)))
    return MetricScore("STOI", value, (-1.0, 1.0))


def ncm(clean_vocoder_input: AudioBuffer, degraded_vocoder_input: AudioBuffer, cfg: VocoderConfig) -> MetricScore:
    """Normalized covariance metric over the vocoder's 16 analysis bands.

    Per band, the clean/degraded envelope correlation ``r`` gives an apparent
    SNR ``10 log10(r^2 / (1 - r^2))`` which is clipped to +-15 dB, mapped to
    [0, 1], and averaged with uniform weights. Bands whose clean envelope has
    no variance are skipped.
    """
    clean, degraded = _paired(clean_vocoder_input, degraded_vocoder_input)
    if len(clean) < 2:
        raise SignalTooShortError("signals too short for NCM")
    step = max(1, int(round(cfg.sample_rate / NCM_ENV_RATE)))
    ex = band_envelopes(clean, cfg)[:, ::step]
    ey = band_envelopes(degraded, cfg)[:, ::step]

    scores = []
    for a, b in zip(ex, ey):
        a = a - a.mean()
        b = b - b.mean()
        va, vb = float(a @ a), float(b @ b)
        if va <= 0.0 or va <= (_EPS * np.abs(a).max()) ** 2 * a.size:
            continue
        if vb <= 0.0:
            r2 = 0.0
        else:
            r2 = min(float(a @ b) ** 2 / (va * vb), 1.0)
        if r2 >= 1.0:
            snr = NCM_SNR_RANGE_DB
        elif r2 <= 0.0:
            snr = -NCM_SNR_RANGE_DB
        else:
            snr = float(np.clip(10.0 * math.log10(r2 / (1.0 - r2)), -NCM_SNR_RANGE_DB, NCM_SNR_RANGE_DB))
        scores.append((snr + NCM_SNR_RANGE_DB) / (2.0 * NCM_SNR_RANGE_DB))
    if not scores:
        raise ZeroVarianceError("every clean band envelope has zero variance")
    return MetricScore("NCM", float(np.mean(scores)), (0.0, 1.0))


def snr_db(reference: AudioBuffer, test: AudioBuffer) -> float:
    """``10 log10(sum ref^2 / sum (test - ref)^2)``; ``inf`` when the signals are identical."""
    ref = np.asarray(getattr(reference, "samples", reference), dtype=np.float64)
    tst = np.asarray(getattr(test, "samples", test), dtype=np.float64)
    if ref.shape != tst.shape:
        raise InvalidAudioError(f"length mismatch: {ref.shape} vs {tst.shape}")
    err = float(np.sum((tst - ref) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(ref ** 2)) / err)


def student_t_sf2(t: float, dof: int) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` via the regularized incomplete beta."""
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples need equal 1-D shapes, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or sd <= 1e-14 * max(1.0, float(np.abs(d).max())):
        raise ZeroVarianceError("differences have zero variance")
    t = float(d.mean()) / (sd / math.sqrt(n))
    dof = n - 1
    return TTestResult(t, dof, min(1.0, max(0.0, student_t_sf2(t, dof))))
