"""Spectrogram images as 8-bit binary PGM with an axis sidecar."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..audio import AudioBuffer
from ..spectral import StftConfig, stft

DYNAMIC_RANGE_DB = 80.0


def spectrogram_image(buf: AudioBuffer, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """uint8 image of shape (F, T): row 0 is the highest frequency bin."""
    mag = np.abs(stft(buf, cfg).frames).T
    peak = mag.max()
    if peak == 0.0:
        return np.zeros(mag.shape, dtype=np.uint8)
    db = 20.0 * np.log10(np.maximum(mag, peak * 10.0 ** (-DYNAMIC_RANGE_DB / 20.0)))
    top = 20.0 * np.log10(peak)
    scaled = (db - (top - DYNAMIC_RANGE_DB)) / DYNAMIC_RANGE_DB * 255.0
    return np.flipud(np.round(np.clip(scaled, 0.0, 255.0)).astype(np.uint8))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".txt")


def export_spectrogram(buf: AudioBuffer, cfg: StftConfig, path) -> None:
    """Write a dB-scaled magnitude spectrogram (P5 PGM) plus ``<path>.txt`` axis scales."""
    img = spectrogram_image(buf, cfg)
    height, width = img.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    mag_peak = float(np.abs(stft(buf, cfg).frames).max())
    top = 20.0 * np.log10(mag_peak) if mag_peak > 0 else float("-inf")
    lines = [
        f"width_frames {width}",
        f"height_bins {height}",
        f"sample_rate_hz {buf.sample_rate}",
        f"fft_size {cfg.fft_size}",
        f"hop {cfg.hop}",
        f"x_seconds_per_pixel {cfg.hop / buf.sample_rate!r}",
        f"x_first_frame_center_s {cfg.fft_size / 2 / buf.sample_rate!r}",
        f"y_hz_per_pixel {buf.sample_rate / cfg.fft_size!r}",
        "y_origin bottom (row height-1 is 0 Hz)",
        f"db_max {top!r}",
        f"db_min {top - DYNAMIC_RANGE_DB!r}",
        "gray 0 = db_min, 255 = db_max",
    ]
    sidecar_path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    data = parts[4]
    return np.frombuffer(data[:width * height], dtype=np.uint8).reshape(height, width)
