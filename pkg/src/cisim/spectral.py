"""STFT analysis/synthesis, log1p features, ratio masks and layer fusion.

Enhancement works on log1p magnitude features: the noisy STFT is split into
``log1p(|X|)`` and its phase, a ratio mask multiplies the features element-wise,
and the result is mapped back with ``expm1`` and recombined with the noisy
phase before overlap-add resynthesis.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .audio import AudioBuffer
from .errors import (
    CoverageGapError,
    InvalidAudioError,
    MaskFormatError,
    MaskTruncatedError,
    ShapeMismatchError,
    SignalTooShortError,
    SimplexError,
)

log = logging.getLogger(__name__)

MASK_MAGIC = b"CIVM"
MASK_VERSION = 1
_MASK_HEADER = struct.Struct("<4sHII")

_WINDOWS = ("hann",)


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two, got {n}")
        if self.hop <= 0 or n % self.hop or n // self.hop < 2:
            raise ValueError(f"hop {self.hop} must divide fft_size {n} with at least 50% overlap")
        if self.window not in _WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {_WINDOWS}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.fft_size:
            return 0
        return (n_samples - self.fft_size) // self.hop + 1


@lru_cache(maxsize=32)
def _window(name: str, size: int) -> np.ndarray:
    # periodic Hann; lru_cache is thread-safe for lookups
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def _interior_norm(cfg: StftConfig) -> float:
    # half the steady-state minimum: every sample past the first half-window
    # stays above it for hop <= fft_size / 2, so only the true edges are tapered
    w2 = _window(cfg.window, cfg.fft_size) ** 2
    return 0.5 * float(w2.reshape(-1, cfg.hop).sum(axis=0).min())


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex STFT frames of shape (T, F)."""

    frames: np.ndarray
    config: StftConfig
    origin_len: int
    sample_rate: int
    clamped: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.frames)):
            raise InvalidAudioError("spectrogram contains non-finite values")

    @property
    def shape(self):
        return self.frames.shape


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Real (T, F) log1p-magnitude features, plus the STFT geometry they came from."""

    values: np.ndarray
    config: Optional[StftConfig] = None
    origin_len: Optional[int] = None
    sample_rate: Optional[int] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatchError(f"features must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidAudioError("features contain non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def is_valid(self) -> bool:
        return bool(np.all(self.values >= 0.0))


@dataclass(frozen=True, eq=False)
class RatioMask:
    """Time-frequency mask in [0, 1]. Out-of-range input is clamped and counted."""

    values: np.ndarray
    clamped: int = field(default=0, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatchError(f"mask must be 2-D, got shape {values.shape}")
        if np.isnan(values).any():
            raise MaskFormatError("mask contains NaN")
        outside = int(np.count_nonzero((values < 0.0) | (values > 1.0)))
        if outside:
            values = np.clip(values, 0.0, 1.0)
            log.warning("clamped %d mask values into [0, 1]", outside)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "clamped", self.clamped + outside)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def ones(cls, shape) -> "RatioMask":
        return cls(np.ones(shape))


@dataclass(frozen=True, eq=False)
class LayerStack:
    layers: Sequence[np.ndarray]
    weights: Sequence[float]

    def __post_init__(self):
        layers = [np.asarray(getattr(h, "values", h), dtype=np.float64) for h in self.layers]
        weights = np.asarray(self.weights, dtype=np.float64)
        if not layers:
            raise ShapeMismatchError("layer stack is empty")
        if weights.shape != (len(layers),):
            raise SimplexError(f"{weights.size} weights for {len(layers)} layers")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise SimplexError(f"weights must be non-negative and sum to 1, got {weights.tolist()}")
        shape = layers[0].shape
        if any(h.shape != shape for h in layers):
            raise ShapeMismatchError("layers have different shapes")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", weights)


def stft(buf: AudioBuffer, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Frame ``buf`` without padding: ``T = (len - fft_size) // hop + 1`` frames."""
    n = len(buf)
    if n < cfg.fft_size:
        raise SignalTooShortError(f"{n} samples is shorter than one {cfg.fft_size}-sample frame")
    n_frames = cfg.n_frames(n)
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = buf.samples[idx] * _window(cfg.window, cfg.fft_size)
    return Spectrogram(np.fft.rfft(frames, axis=1), cfg, n, buf.sample_rate)


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add inverse of :func:`stft`.

    Each synthesized frame is windowed again and the sum is divided by the
    overlapped squared window. Near the signal ends that sum drops towards
    zero, so it is floored: interior samples are reconstructed exactly and
    the first and last half-window are tapered rather than amplified. Samples past the last frame are zero.
    """
    cfg = spec.config
    frames = spec.frames
    if frames.ndim != 2 or frames.shape[1] != cfg.n_bins:
        raise ShapeMismatchError(
            f"frames of width {frames.shape[-1]} do not match fft_size {cfg.fft_size}"
        )
    n_frames = frames.shape[0]
    w = _window(cfg.window, cfg.fft_size)
    total = max(spec.origin_len, cfg.fft_size + cfg.hop * max(n_frames - 1, 0))
    out = np.zeros(total)
    norm = np.zeros(total)
    if n_frames:
        chunks = np.fft.irfft(frames, n=cfg.fft_size, axis=1) * w
        for t in range(n_frames):
            start = t * cfg.hop
            out[start:start + cfg.fft_size] += chunks[t]
            norm[start:start + cfg.fft_size] += w * w
    out /= np.maximum(norm, _interior_norm(cfg))
    return AudioBuffer(out[:spec.origin_len], spec.sample_rate)


def log1p_features(spec: Spectrogram):
    """Return ``(FeatureMatrix(log1p |X|), phase)``."""
    feat = FeatureMatrix(np.log1p(np.abs(spec.frames)), spec.config, spec.origin_len, spec.sample_rate)
    return feat, np.angle(spec.frames)


def inverse_log1p(feat: FeatureMatrix, phase: np.ndarray) -> Spectrogram:
    """Map features back to a complex spectrogram using ``phase``.

    Negative features would give negative magnitudes; those cells are set to
    zero and counted in ``Spectrogram.clamped``.
    """
    phase = np.asarray(phase, dtype=np.float64)
    if phase.shape != feat.shape:
        raise ShapeMismatchError(f"features {feat.shape} vs phase {phase.shape}")
    if feat.config is None or feat.origin_len is None or feat.sample_rate is None:
        raise ValueError("feature matrix carries no STFT geometry; build it with log1p_features")
    mag = np.expm1(feat.values)
    negative = int(np.count_nonzero(mag < 0.0))
    if negative:
        log.warning("clamped %d negative magnitudes to zero", negative)
        mag = np.maximum(mag, 0.0)
    return Spectrogram(mag * np.exp(1j * phase), feat.config, feat.origin_len, feat.sample_rate, negative)


def apply_mask(feat: FeatureMatrix, mask: RatioMask) -> FeatureMatrix:
    if feat.shape != mask.shape:
        raise ShapeMismatchError(f"features {feat.shape} vs mask {mask.shape}")
    return replace(feat, values=feat.values * mask.values)


def enhance_with_mask(noisy: AudioBuffer, mask: RatioMask, cfg: StftConfig = StftConfig()) -> AudioBuffer:
    """Full chain: stft -> log1p -> mask -> expm1 with noisy phase -> istft."""
    feat, phase = log1p_features(stft(noisy, cfg))
    return istft(inverse_log1p(apply_mask(feat, mask), phase))


def sliding_offsets(n_frames: int, window_frames: int, hop_frames: int) -> list:
    """Start frames of windows that cover ``[0, n_frames)``; the last window is end-aligned."""
    if window_frames <= 0 or hop_frames <= 0:
        raise ValueError("window and hop must be positive")
    if n_frames <= window_frames:
        return [0]
    offsets = list(range(0, n_frames - window_frames + 1, hop_frames))
    if offsets[-1] + window_frames < n_frames:
        offsets.append(n_frames - window_frames)
    return offsets


def assemble_windowed_masks(chunks, n_frames: Optional[int] = None) -> RatioMask:
    """Average overlapping chunk masks frame by frame.

    ``chunks`` is a sequence of ``(RatioMask, frame_offset)``. The result is
    independent of chunk order.
    """
    chunks = [(m if isinstance(m, RatioMask) else RatioMask(m), int(off)) for m, off in chunks]
    if not chunks:
        raise CoverageGapError("no chunks to assemble")
    n_bins = chunks[0][0].shape[1]
    if any(m.shape[1] != n_bins for m, _ in chunks):
        raise ShapeMismatchError("chunks have different frequency widths")
    if any(off < 0 for _, off in chunks):
        raise ValueError("negative frame offset")
    end = max(off + m.shape[0] for m, off in chunks)
    total = end if n_frames is None else n_frames
    # canonical order so the floating-point sum does not depend on input order
    chunks.sort(key=lambda c: (c[1], c[0].shape[0], c[0].values.tobytes()))
    acc = np.zeros((max(total, end), n_bins))
    count = np.zeros(max(total, end))
    for m, off in chunks:
        acc[off:off + m.shape[0]] += m.values
        count[off:off + m.shape[0]] += 1
    acc, count = acc[:total], count[:total]
    gaps = np.flatnonzero(count == 0)
    if gaps.size:
        raise CoverageGapError(f"frames {gaps[:5].tolist()}... not covered by any chunk")
    return RatioMask(np.clip(acc / count[:, None], 0.0, 1.0))


def windowed_mask(
    predict: Callable[[np.ndarray], np.ndarray],
    feat: FeatureMatrix,
    window_frames: int,
    hop_frames: Optional[int] = None,
) -> RatioMask:
    """Run a fixed-length mask predictor over ``feat`` with a sliding window."""
    hop_frames = hop_frames or max(1, window_frames // 2)
    n_frames = feat.shape[0]
    chunks = []
    for off in sliding_offsets(n_frames, window_frames, hop_frames):
        segment = feat.values[off:off + window_frames]
        chunks.append((RatioMask(predict(segment)), off))
    return assemble_windowed_masks(chunks, n_frames)


def default_window_frames(sample_rate: int, cfg: StftConfig = StftConfig(), seconds: float = 3.0) -> int:
    return max(1, int(round(seconds * sample_rate / cfg.hop)))


def fuse_layers(stack: LayerStack) -> FeatureMatrix:
    """Weighted sum of the stacked layers with simplex weights."""
    out = np.zeros_like(stack.layers[0])
    for w, h in zip(stack.weights, stack.layers):
        out += w * h
    return FeatureMatrix(out)


def write_mask(values, path) -> None:
    """Serialize a 2-D matrix in the CIVM mask-exchange format."""
    arr = np.asarray(getattr(values, "values", values))
    if arr.ndim != 2:
        raise ShapeMismatchError(f"mask must be 2-D, got shape {arr.shape}")
    rows, cols = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(_MASK_HEADER.pack(MASK_MAGIC, MASK_VERSION, rows, cols) + payload)


def read_mask(path) -> np.ndarray:
    """Read a CIVM file into a float32 (rows, cols) array without clamping."""
    raw = Path(path).read_bytes()
    if len(raw) < _MASK_HEADER.size:
        raise MaskTruncatedError(f"{path}: {len(raw)} bytes is shorter than the header")
    magic, version, rows, cols = _MASK_HEADER.unpack_from(raw, 0)
    if magic != MASK_MAGIC:
        raise MaskFormatError(f"{path}: bad magic {magic!r}")
    if version != MASK_VERSION:
        raise MaskFormatError(f"{path}: unsupported mask format version {version}")
    expected = rows * cols * 4
    payload = raw[_MASK_HEADER.size:]
    if len(payload) < expected:
        raise MaskTruncatedError(f"{path}: payload has {len(payload)} bytes, header promises {expected}")
    if len(payload) > expected:
        raise MaskFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
