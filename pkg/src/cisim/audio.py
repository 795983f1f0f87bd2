"""Audio containers, WAV I/O, resampling and SNR-controlled mixing."""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    InvalidAudioError,
    SampleRateMismatchError,
    SilentSignalError,
    WavEncodingError,
    WavHeaderError,
    WavNotFoundError,
)

PROCESSING_RATE = 16000

_PCM = 0x0001
_IEEE_FLOAT = 0x0003
_EXTENSIBLE = 0xFFFE
_INT16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono float64 samples at an integer sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidAudioError(f"expected mono samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidAudioError("samples contain NaN or Inf")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise InvalidAudioError(f"invalid sample rate {self.sample_rate!r}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)


@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    noise_seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise InvalidAudioError(f"snr_db must be finite, got {self.snr_db}")
        if self.noise_seed < 0:
            raise InvalidAudioError("noise_seed must be unsigned")


def read_wav(path) -> AudioBuffer:
    """Decode a PCM16 or float32 RIFF/WAVE file into a mono buffer.

    Multichannel files are averaged across channels. Integer samples are
    scaled by 2**-15, so full-scale positive int16 maps to 32767/32768.
    """
    path = Path(path)
    if not path.is_file():
        raise WavNotFoundError(f"no such WAV file: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavHeaderError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)

    if fmt is None or len(fmt) < 16:
        raise WavHeaderError(f"{path}: missing or short fmt chunk")
    if data is None:
        raise WavHeaderError(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _EXTENSIBLE:
        if len(fmt) < 26:
            raise WavHeaderError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1 or rate < 1 or block_align != channels * bits // 8:
        raise WavHeaderError(
            f"{path}: inconsistent header (channels={channels}, rate={rate}, "
            f"block_align={block_align}, bits={bits})"
        )

    if tag == _PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), _INT16_SCALE
    elif tag == _IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise WavEncodingError(f"{path}: unsupported encoding (format tag {tag:#06x}, {bits} bits)")

    n_frames = len(data) // block_align
    frames = np.frombuffer(data[:n_frames * block_align], dtype=dtype).reshape(n_frames, channels)
    samples = frames.astype(np.float64).mean(axis=1) / scale
    if not np.all(np.isfinite(samples)):
        raise WavEncodingError(f"{path}: float payload contains NaN or Inf")
    return AudioBuffer(samples, rate)


def write_wav(buf: AudioBuffer, path) -> None:
    """Write ``buf`` as 16-bit PCM mono, clipping to [-1, 1 - 2**-15]."""
    if len(buf) == 0:
        raise InvalidAudioError("refusing to write an empty buffer")
    clipped = np.clip(buf.samples, -1.0, 1.0 - 1.0 / _INT16_SCALE)
    codes = np.round(clipped * _INT16_SCALE).astype("<i2")
    path = Path(path)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(buf.sample_rate)
        fh.writeframes(codes.tobytes())


def resample(buf: AudioBuffer, target_sr: int) -> AudioBuffer:
    """Polyphase windowed-sinc resampling to ``target_sr``.

    The output has ``round(len * target_sr / source_sr)`` samples.
    """
    if int(target_sr) != target_sr or target_sr <= 0:
        raise InvalidAudioError(f"invalid target rate {target_sr!r}")
    target_sr = int(target_sr)
    if target_sr == buf.sample_rate:
        return buf
    ratio = Fraction(target_sr, buf.sample_rate)
    out_len = int(round(len(buf) * target_sr / buf.sample_rate))
    if len(buf) == 0:
        return AudioBuffer(np.zeros(0), target_sr)
    # kaiser beta 8.6 keeps the round-trip error for in-band content well under 1e-3
    y = resample_poly(buf.samples, ratio.numerator, ratio.denominator, window=("kaiser", 8.6))
    if y.shape[0] >= out_len:
        y = y[:out_len]
    else:
        y = np.pad(y, (0, out_len - y.shape[0]))
    return AudioBuffer(y, target_sr)


def to_processing_rate(buf: AudioBuffer) -> AudioBuffer:
    return resample(buf, PROCESSING_RATE)


def rms(buf) -> float:
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf, dtype=np.float64)
    if x.shape[0] == 0:
        raise InvalidAudioError("rms of an empty buffer")
    return float(np.sqrt(np.mean(x * x)))


def crop_noise(noise: AudioBuffer, length: int, noise_seed: int) -> np.ndarray:
    """Take ``length`` samples of noise starting at a seed-derived offset, wrapping around."""
    offset = int(np.random.default_rng(noise_seed).integers(0, len(noise)))
    return np.take(noise.samples, offset + np.arange(length), mode="wrap")


def mix_at_snr(clean: AudioBuffer, noise: AudioBuffer, spec: MixSpec):
    """Return ``(noisy, scaled_noise)`` with ``noisy = clean + scaled_noise`` at ``spec.snr_db``.

    The noisy output is not renormalized; values may exceed [-1, 1] and are
    clipped only when written to disk.
    """
    if clean.sample_rate != noise.sample_rate:
        raise SampleRateMismatchError(
            f"clean at {clean.sample_rate} Hz, noise at {noise.sample_rate} Hz"
        )
    if len(clean) == 0 or len(noise) == 0:
        raise SilentSignalError("empty input to mixer")
    clean_rms = rms(clean)
    if clean_rms == 0.0:
        raise SilentSignalError("clean signal is silent")
    crop = crop_noise(noise, len(clean), spec.noise_seed)
    noise_rms = rms(crop)
    if noise_rms == 0.0:
        raise SilentSignalError("noise segment is silent")
    gain = clean_rms / (noise_rms * 10.0 ** (spec.snr_db / 20.0))
    scaled = gain * crop
    return clean.with_samples(clean.samples + scaled), clean.with_samples(scaled)
