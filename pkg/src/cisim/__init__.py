"""Cochlear-implant speech processing toolkit.

Noise mixing at controlled SNR, log1p-spectral ratio-mask enhancement, a
16-channel tone vocoder, and STOI/NCM scoring with paired t-tests.
"""

from .audio import AudioBuffer, MixSpec, mix_at_snr, read_wav, resample, rms, to_processing_rate, write_wav
from .enhancers import OracleContext, irm_oracle, load_external_mask, logmmse_enhance, oracle_context
from .errors import CisimError
from .metrics import MetricScore, TTestResult, ncm, paired_ttest, snr_db, stoi
from .spectral import (
    FeatureMatrix,
    LayerStack,
    RatioMask,
    Spectrogram,
    StftConfig,
    apply_mask,
    assemble_windowed_masks,
    enhance_with_mask,
    fuse_layers,
    inverse_log1p,
    istft,
    log1p_features,
    read_mask,
    stft,
    write_mask,
)
from .vocoder import BandSpec, VocoderConfig, bandpass, default_vocoder_config, envelope, vocode

__version__ = "0.1.0"
