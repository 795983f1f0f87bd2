"""Condition-grid execution: mix, enhance, optionally vocode, score."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

from ..audio import AudioBuffer, MixSpec, mix_at_snr, read_wav, to_processing_rate
from ..enhancers import irm_oracle, load_external_mask, logmmse_enhance, oracle_context
from ..errors import CisimError, ManifestError
from ..metrics import ncm, stoi
from ..spectral import StftConfig, enhance_with_mask
from ..vocoder import vocode
from .config import ConditionGrid, EvalConfig, Manifest
from .report import EvalReport, ScoreRow, build_report

log = logging.getLogger(__name__)

METRICS = ("NCM", "STOI")


def derive_noise_seed(seed: int, utterance_id: str, noise_name: str) -> int:
    """Stable 63-bit crop seed; shared across SNRs so conditions stay paired."""
    digest = hashlib.sha256(f"{seed}\x00{utterance_id}\x00{noise_name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def snr_tag(snr_db: float) -> str:
    return f"{snr_db:g}"


def find_external_mask(masks_dir: Path, utterance_id: str, noise: str, snr_db: float) -> Path:
    """``<id>__<noise>__<snr>.civm`` if present, else ``<id>.civm``."""
    specific = masks_dir / f"{utterance_id}__{noise}__{snr_tag(snr_db)}.civm"
    if specific.is_file():
        return specific
    return masks_dir / f"{utterance_id}.civm"


def process(enhancer: str, noisy: AudioBuffer, clean: AudioBuffer, scaled_noise: AudioBuffer,
            stft_cfg: StftConfig, mask_path: Optional[Path] = None) -> AudioBuffer:
    if enhancer == "none":
        return noisy
    if enhancer == "irm_oracle":
        return enhance_with_mask(noisy, irm_oracle(oracle_context(clean, scaled_noise, stft_cfg)), stft_cfg)
    if enhancer == "logmmse":
        return logmmse_enhance(noisy, stft_cfg)[0]
    if enhancer == "external":
        if mask_path is None:
            raise CisimError("external enhancer needs a mask file")
        expected = (stft_cfg.n_frames(len(noisy)), stft_cfg.n_bins)
        return enhance_with_mask(noisy, load_external_mask(mask_path, expected), stft_cfg)
    raise CisimError(f"unknown enhancer {enhancer!r}")


@dataclass(frozen=True)
class _Cell:
    utterance_id: str
    noise: str
    snr_db: float


class _Inputs:
    """Decoded clean/noise audio and vocoded clean references, loaded once."""

    def __init__(self, manifest: Manifest, noise_names, cfg: EvalConfig):
        self.clean: Dict[str, AudioBuffer] = {}
        self.clean_errors: Dict[str, str] = {}
        for uid, path in manifest.clean_entries:
            try:
                self.clean[uid] = to_processing_rate(read_wav(path))
            except CisimError as exc:
                self.clean_errors[uid] = f"{type(exc).__name__}: {exc}"
        paths = dict(manifest.noise_entries)
        self.noise: Dict[str, AudioBuffer] = {}
        self.noise_errors: Dict[str, str] = {}
        for name in noise_names:
            try:
                self.noise[name] = to_processing_rate(read_wav(paths[name]))
            except CisimError as exc:
                self.noise_errors[name] = f"{type(exc).__name__}: {exc}"
        self.vocoded_clean: Dict[str, AudioBuffer] = {}
        if cfg.grid.vocoded:
            for uid, buf in self.clean.items():
                try:
                    self.vocoded_clean[uid] = vocode(buf, cfg.vocoder)
                except CisimError as exc:
                    self.clean_errors[uid] = f"{type(exc).__name__}: {exc}"


def _fail_rows(cell: _Cell, enhancers, message: str) -> List[ScoreRow]:
    return [ScoreRow(cell.utterance_id, cell.noise, cell.snr_db, e, m, None, message)
            for e in enhancers for m in METRICS]


def _run_cell(cell: _Cell, inputs: _Inputs, cfg: EvalConfig) -> List[ScoreRow]:
    enhancers = cfg.grid.enhancers
    failure = inputs.clean_errors.get(cell.utterance_id) or inputs.noise_errors.get(cell.noise)
    if failure:
        return _fail_rows(cell, enhancers, failure)
    clean = inputs.clean[cell.utterance_id]
    try:
        spec = MixSpec(cell.snr_db, derive_noise_seed(cfg.seed, cell.utterance_id, cell.noise))
        noisy, scaled_noise = mix_at_snr(clean, inputs.noise[cell.noise], spec)
    except CisimError as exc:
        return _fail_rows(cell, enhancers, f"{type(exc).__name__}: {exc}")

    rows = []
    for enhancer in enhancers:
        try:
            mask_path = None
            if enhancer == "external":
                mask_path = find_external_mask(cfg.masks_dir, cell.utterance_id, cell.noise, cell.snr_db)
            processed = process(enhancer, noisy, clean, scaled_noise, cfg.stft, mask_path)
        except (CisimError, OSError) as exc:
            rows.extend(_fail_rows(cell, [enhancer], f"{type(exc).__name__}: {exc}"))
            continue
        for metric in METRICS:
            try:
                if metric == "STOI":
                    value = stoi(clean, processed).value
                elif cfg.grid.vocoded:
                    value = ncm(inputs.vocoded_clean[cell.utterance_id], vocode(processed, cfg.vocoder), cfg.vocoder).value
                else:
                    value = ncm(clean, processed, cfg.vocoder).value
                rows.append(ScoreRow(cell.utterance_id, cell.noise, cell.snr_db, enhancer, metric, value))
            except CisimError as exc:
                rows.append(ScoreRow(cell.utterance_id, cell.noise, cell.snr_db, enhancer, metric, None,
                                     f"{type(exc).__name__}: {exc}"))
    return rows


def run_eval(manifest: Manifest, grid: Optional[ConditionGrid] = None,
             config: Optional[EvalConfig] = None) -> EvalReport:
    """Evaluate every (utterance, noise, SNR, enhancer) cell of the grid.

    ``grid`` overrides ``config.grid`` when given. Failures are recorded on
    the affected rows and the run continues. Rows are sorted canonically, so
    the report does not depend on the number of workers.
    """
    cfg = config or EvalConfig()
    if grid is not None:
        cfg = replace(cfg, grid=grid, noises_auto=cfg.noises_auto and not grid.noise_names)
    if not manifest.clean_entries or not manifest.noise_entries:
        raise ManifestError("empty manifest")
    if "external" in cfg.grid.enhancers:
        if cfg.masks_dir is None or not Path(cfg.masks_dir).is_dir():
            raise ManifestError(f"external enhancer selected but mask directory is unreadable: {cfg.masks_dir}")
    noise_names = cfg.resolve_noises(manifest)
    inputs = _Inputs(manifest, noise_names, cfg)
    cells = [_Cell(uid, noise, float(snr))
             for uid, _ in manifest.clean_entries
             for noise in noise_names
             for snr in cfg.grid.snrs_db]
    log.info("evaluating %d cells x %d enhancers with %d worker(s)", len(cells), len(cfg.grid.enhancers), cfg.jobs)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda c: _run_cell(c, inputs, cfg), cells))
    else:
        results = [_run_cell(c, inputs, cfg) for c in cells]
    rows = [r for chunk in results for r in chunk]
    config = cfg.to_dict()
    config["noises"] = list(noise_names)
    return build_report(rows, config, cfg.ttest_reference)
