"""Manifest CSV and the flat ``key = value`` grid configuration."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..errors import ConfigError, ManifestError
from ..spectral import StftConfig
from ..vocoder import VocoderConfig, default_vocoder_config

TEST_SNRS_DB = (-7.0, -4.0, -1.0, 2.0, 5.0, 8.0)
PROTOCOL_NOISES = ("babycry", "babble", "1talker", "2talkers", "3talkers")
ENHANCERS = ("none", "irm_oracle", "logmmse", "external")

# key -> help text; the README lists the same keys
GRID_KEYS = {
    "snrs_db": "comma-separated mixture SNRs in dB",
    "noises": "comma-separated noise names from the manifest, or 'auto'",
    "enhancers": "comma-separated subset of none, irm_oracle, logmmse, external[:<dir>]",
    "vocoded": "true: NCM compares vocoded clean vs vocoded processed; false: unvocoded inputs",
    "seed": "base seed for noise crop offsets",
    "jobs": "worker threads",
    "masks": "directory of <utterance_id>.civm files for the external enhancer",
    "fft_size": "STFT size in samples",
    "hop": "STFT hop in samples",
    "band_edges": "17 comma-separated vocoder band edges in Hz",
    "bp_order": "Butterworth prototype order of each vocoder band-pass",
    "env_cutoff_hz": "envelope low-pass cutoff in Hz",
    "env_order": "envelope low-pass order",
    "ttest_reference": "enhancer every other enhancer is t-tested against",
}


@dataclass(frozen=True)
class Manifest:
    clean_entries: Tuple[Tuple[str, Path], ...]
    noise_entries: Tuple[Tuple[str, Path], ...]

    def __post_init__(self):
        ids = [u for u, _ in self.clean_entries]
        dupes = sorted({u for u in ids if ids.count(u) > 1})
        if dupes:
            raise ManifestError(f"duplicate utterance ids: {dupes}")
        names = [n for n, _ in self.noise_entries]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ManifestError(f"duplicate noise names: {dupes}")

    @property
    def noise_names(self) -> List[str]:
        return [n for n, _ in self.noise_entries]


def load_manifest(path) -> Manifest:
    """Read a ``kind,id,path`` CSV; relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    clean, noise = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"kind", "id", "path"} <= {f.strip() for f in reader.fieldnames}:
            raise ManifestError(f"{path}: expected header with columns kind,id,path")
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
            kind, ident, rel = row["kind"], row["id"], row["path"]
            if not ident or not rel:
                raise ManifestError(f"{path}:{lineno}: empty id or path")
            target = Path(rel)
            if not target.is_absolute():
                target = path.parent / target
            if not target.is_file():
                raise ManifestError(f"{path}:{lineno}: file not found: {target}")
            if kind == "clean":
                clean.append((ident, target))
            elif kind == "noise":
                noise.append((ident, target))
            else:
                raise ManifestError(f"{path}:{lineno}: kind must be clean or noise, got {kind!r}")
    if not clean:
        raise ManifestError(f"{path}: no clean entries")
    if not noise:
        raise ManifestError(f"{path}: no noise entries")
    return Manifest(tuple(clean), tuple(noise))


@dataclass(frozen=True)
class ConditionGrid:
    snrs_db: Tuple[float, ...] = TEST_SNRS_DB
    noise_names: Tuple[str, ...] = ()
    enhancers: Tuple[str, ...] = ("none", "irm_oracle", "logmmse")
    vocoded: bool = True

    def __post_init__(self):
        if not self.snrs_db:
            raise ConfigError("grid has no SNRs")
        if not self.enhancers:
            raise ConfigError("grid has no enhancers")
        for e in self.enhancers:
            if e not in ENHANCERS:
                raise ConfigError(f"unknown enhancer {e!r}; choose from {ENHANCERS}")


@dataclass
class EvalConfig:
    grid: ConditionGrid = field(default_factory=ConditionGrid)
    seed: int = 0
    jobs: int = 1
    masks_dir: Optional[Path] = None
    stft: StftConfig = field(default_factory=StftConfig)
    vocoder: VocoderConfig = field(default_factory=default_vocoder_config)
    ttest_reference: str = "none"
    noises_auto: bool = True

    def resolve_noises(self, manifest: Manifest) -> Tuple[str, ...]:
        available = manifest.noise_names
        if not self.noises_auto:
            missing = [n for n in self.grid.noise_names if n not in available]
            if missing:
                raise ConfigError(f"grid noises not in manifest: {missing}")
            return self.grid.noise_names
        preferred = [n for n in PROTOCOL_NOISES if n in available]
        return tuple(preferred or available)

    def to_dict(self) -> Dict:
        return {
            "snrs_db": list(self.grid.snrs_db),
            "noises": list(self.grid.noise_names),
            "enhancers": list(self.grid.enhancers),
            "vocoded": self.grid.vocoded,
            "seed": self.seed,
            "fft_size": self.stft.fft_size,
            "hop": self.stft.hop,
            "band_edges": self.vocoder.edges,
            "bp_order": self.vocoder.bp_order,
            "env_cutoff_hz": self.vocoder.env_cutoff_hz,
            "env_order": self.vocoder.env_order,
            "ttest_reference": self.ttest_reference,
        }


def _floats(key, raw) -> List[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _int(key, raw) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _bool(key, raw) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def parse_grid_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in GRID_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    return values


def build_config(values: Dict[str, str]) -> EvalConfig:
    """Turn parsed ``key = value`` pairs into an :class:`EvalConfig`."""
    grid_kwargs = {}
    cfg = EvalConfig()
    if "snrs_db" in values:
        grid_kwargs["snrs_db"] = tuple(_floats("snrs_db", values["snrs_db"]))
    if "noises" in values and values["noises"].lower() != "auto":
        grid_kwargs["noise_names"] = tuple(n.strip() for n in values["noises"].split(",") if n.strip())
        cfg.noises_auto = False
    masks = values.get("masks")
    if "enhancers" in values:
        names = []
        for item in (e.strip() for e in values["enhancers"].split(",")):
            if not item:
                continue
            if item.startswith("external:"):
                masks = item.split(":", 1)[1]
                item = "external"
            names.append(item)
        grid_kwargs["enhancers"] = tuple(names)
    if "vocoded" in values:
        grid_kwargs["vocoded"] = _bool("vocoded", values["vocoded"])
    cfg.grid = ConditionGrid(**grid_kwargs)
    if masks:
        cfg.masks_dir = Path(masks)
    if "seed" in values:
        cfg.seed = _int("seed", values["seed"])
    if "jobs" in values:
        cfg.jobs = _int("jobs", values["jobs"])
    if "ttest_reference" in values:
        cfg.ttest_reference = values["ttest_reference"]

    try:
        if "fft_size" in values or "hop" in values:
            cfg.stft = StftConfig(
                _int("fft_size", values.get("fft_size", "512")),
                _int("hop", values.get("hop", "256")),
            )
        voc_kwargs = {}
        for key in ("bp_order", "env_order"):
            if key in values:
                voc_kwargs[key] = _int(key, values[key])
        if "env_cutoff_hz" in values:
            voc_kwargs["env_cutoff_hz"] = _floats("env_cutoff_hz", values["env_cutoff_hz"])[0]
        if voc_kwargs or "band_edges" in values:
            edges = _floats("band_edges", values["band_edges"]) if "band_edges" in values else cfg.vocoder.edges
            cfg.vocoder = VocoderConfig.from_edges(edges, 16000, **voc_kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.seed < 0:
        raise ConfigError("seed must be unsigned")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return cfg


def load_grid(path) -> EvalConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read grid config {path}: {exc}") from None
    return build_config(parse_grid_text(text))
