"""Mask sources for the enhancement chain: oracle IRM, log-MMSE, and external files."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import exp1

from .audio import AudioBuffer
from .errors import ShapeMismatchError, SignalTooShortError
from .spectral import (
    FeatureMatrix,
    RatioMask,
    StftConfig,
    istft,
    log1p_features,
    read_mask,
    stft,
)

log = logging.getLogger(__name__)

IRM_EPS = 1e-12

LOGMMSE_ALPHA = 0.98
LOGMMSE_NOISE_MU = 0.98
LOGMMSE_VAD_THRESHOLD = 0.15
LOGMMSE_INIT_FRAMES = 6
LOGMMSE_FLOOR_DB = -25.0
_GAMMA_MAX = 40.0


@dataclass(frozen=True, eq=False)
class OracleContext:
    clean_feat: FeatureMatrix
    noise_feat: FeatureMatrix

    def __post_init__(self):
        if self.clean_feat.shape != self.noise_feat.shape:
            raise ShapeMismatchError(f"clean {self.clean_feat.shape} vs noise {self.noise_feat.shape}")


def oracle_context(clean: AudioBuffer, scaled_noise: AudioBuffer, cfg: StftConfig = StftConfig()) -> OracleContext:
    """Build an oracle context from the clean signal and the noise actually added to it."""
    clean_feat, _ = log1p_features(stft(clean, cfg))
    noise_feat, _ = log1p_features(stft(scaled_noise, cfg))
    return OracleContext(clean_feat, noise_feat)


def irm_oracle(ctx: OracleContext) -> RatioMask:
    """Ideal ratio mask ``S / (S + N + eps)`` on linear STFT magnitudes."""
    s = np.expm1(ctx.clean_feat.values)
    n = np.expm1(ctx.noise_feat.values)
    return RatioMask(s / (s + n + IRM_EPS))


@dataclass
class LogMmseState:
    noise_psd: np.ndarray
    prior_snr: np.ndarray
    alpha: float = LOGMMSE_ALPHA
    frame_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if np.any(self.noise_psd < 0):
            raise ValueError("noise PSD must be non-negative")


def _logmmse_gains(power: np.ndarray) -> np.ndarray:
    n_frames = power.shape[0]
    if n_frames < LOGMMSE_INIT_FRAMES:
        raise SignalTooShortError(
            f"{n_frames} frames; log-MMSE needs at least {LOGMMSE_INIT_FRAMES} to initialise the noise estimate"
        )
    tiny = np.finfo(np.float64).tiny
    state = LogMmseState(
        noise_psd=np.maximum(power[:LOGMMSE_INIT_FRAMES].mean(axis=0), tiny),
        prior_snr=np.zeros(power.shape[1]),
    )
    xi_min = 10.0 ** (LOGMMSE_FLOOR_DB / 10.0)
    g_min = 10.0 ** (LOGMMSE_FLOOR_DB / 20.0)
    gains = np.empty_like(power)
    prev_clean_power = None

    for t in range(n_frames):
        frame = power[t]
        post = np.minimum(frame / state.noise_psd, _GAMMA_MAX)
        if prev_clean_power is None:
            xi = state.alpha + (1.0 - state.alpha) * np.maximum(post - 1.0, 0.0)
        else:
            xi = state.alpha * prev_clean_power / state.noise_psd + (1.0 - state.alpha) * np.maximum(post - 1.0, 0.0)
            xi = np.maximum(xi, xi_min)
        state.prior_snr = xi

        log_lr = post * xi / (1.0 + xi) - np.log1p(xi)
        if log_lr.mean() < LOGMMSE_VAD_THRESHOLD:
            state.noise_psd = LOGMMSE_NOISE_MU * state.noise_psd + (1.0 - LOGMMSE_NOISE_MU) * frame
            state.noise_psd = np.maximum(state.noise_psd, tiny)

        a = xi / (1.0 + xi)
        v = np.maximum(a * post, tiny)
        with np.errstate(over="ignore"):
            g = a * np.exp(0.5 * exp1(v))
        g = np.clip(g, g_min, 1.0)
        gains[t] = g
        prev_clean_power = frame * g * g
        state.frame_index = t + 1
    return gains


def logmmse_enhance(noisy: AudioBuffer, cfg: StftConfig = StftConfig()):
    """Log-spectral-amplitude MMSE enhancement with decision-directed SNR tracking.

    Returns ``(enhanced, mask)`` where ``mask`` holds the clamped per-cell
    gains applied to the noisy magnitudes.
    """
    if len(noisy) < cfg.fft_size:
        raise SignalTooShortError(f"{len(noisy)} samples is shorter than one frame")
    spec = stft(noisy, cfg)
    gains = _logmmse_gains(np.abs(spec.frames) ** 2)
    enhanced = istft(replace(spec, frames=spec.frames * gains))
    return enhanced, RatioMask(gains)


def load_external_mask(path, expected_shape) -> RatioMask:
    """Read a mask-exchange file, verify its shape and clamp into [0, 1].

    The number of clamped cells is available as ``mask.clamped``.
    """
    values = read_mask(path)
    expected_shape = tuple(int(v) for v in expected_shape)
    if values.shape != expected_shape:
        raise ShapeMismatchError(f"{path}: mask shape {values.shape}, expected {expected_shape}")
    return RatioMask(values.astype(np.float64))
