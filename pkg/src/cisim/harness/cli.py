"""``cisim`` command-line tool.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..audio import MixSpec, mix_at_snr, read_wav, to_processing_rate, write_wav
from ..enhancers import irm_oracle, load_external_mask, logmmse_enhance, oracle_context
from ..errors import CisimError, ConfigError
from ..spectral import RatioMask, enhance_with_mask, write_mask
from ..vocoder import vocode
from .config import ENHANCERS, EvalConfig, build_config, load_grid, load_manifest
from .report import emit_report, load_external_scores, load_report, merge_scores, render_tables
from .run import run_eval
from .spectrogram import export_spectrogram

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

log = logging.getLogger("cisim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> EvalConfig:
    cfg = load_grid(args.grid) if getattr(args, "grid", None) else build_config({})
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be unsigned")
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg.jobs = args.jobs
    if getattr(args, "masks", None):
        cfg.masks_dir = Path(args.masks)
    enh = getattr(args, "enhancer", None)
    if enh and args.command == "eval":
        names = tuple(e.strip() for e in enh.split(",") if e.strip())
        cfg.grid = replace(cfg.grid, enhancers=names)
    return cfg


def cmd_mix(args) -> int:
    clean = to_processing_rate(read_wav(args.clean))
    noise = to_processing_rate(read_wav(args.noise))
    noisy, scaled = mix_at_snr(clean, noise, MixSpec(args.snr, args.seed or 0))
    write_wav(noisy, args.out)
    if args.noise_out:
        write_wav(scaled, args.noise_out)
    return EXIT_OK


def cmd_enhance(args) -> int:
    cfg = _config(args)
    noisy = to_processing_rate(read_wav(args.input))
    enhancer = args.enhancer or "logmmse"
    mask = None
    if enhancer == "none":
        out = noisy
    elif enhancer == "logmmse":
        out, mask = logmmse_enhance(noisy, cfg.stft)
    elif enhancer == "irm_oracle":
        if not args.clean or not args.noise_component:
            raise UsageError("irm_oracle needs --clean and --noise-component")
        clean = to_processing_rate(read_wav(args.clean))
        noise = to_processing_rate(read_wav(args.noise_component))
        mask = irm_oracle(oracle_context(clean, noise, cfg.stft))
        out = enhance_with_mask(noisy, mask, cfg.stft)
    elif enhancer == "external":
        if not args.masks:
            raise UsageError("external enhancer needs --masks <file or dir>")
        path = Path(args.masks)
        if path.is_dir():
            path = path / (Path(args.input).stem + ".civm")
        expected = (cfg.stft.n_frames(len(noisy)), cfg.stft.n_bins)
        mask = load_external_mask(path, expected)
        if mask.clamped:
            log.warning("%s: %d mask values clamped into [0, 1]", path, mask.clamped)
        out = enhance_with_mask(noisy, mask, cfg.stft)
    else:
        raise UsageError(f"unknown enhancer {enhancer!r}; choose from {ENHANCERS}")
    write_wav(out, args.out)
    if args.export_mask:
        if mask is None:
            mask = RatioMask.ones((cfg.stft.n_frames(len(noisy)), cfg.stft.n_bins))
        write_mask(mask, args.export_mask)
    return EXIT_OK


def cmd_vocode(args) -> int:
    cfg = _config(args)
    write_wav(vocode(to_processing_rate(read_wav(args.input)), cfg.vocoder), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    report = run_eval(manifest, config=cfg)
    emit_report(report, args.out)
    (Path(args.out) / "tables.md").write_text(render_tables(report))
    n_fail = len(report.failures)
    if n_fail:
        log.warning("%d of %d rows failed", n_fail, len(report.per_utterance))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    report = load_report(args.input or out)
    if args.pesq:
        report = merge_scores(report, load_external_scores(args.pesq, "PESQ"),
                              report.config.get("ttest_reference", "none"))
    emit_report(report, out, args.formats.split(","))
    (out / "tables.md").write_text(render_tables(report))
    sys.stdout.write(render_tables(report))
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_spectrogram(args) -> int:
    cfg = _config(args)
    export_spectrogram(to_processing_rate(read_wav(args.input)), cfg.stft, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cisim", description="Cochlear-implant speech enhancement evaluation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("mix", help="mix clean speech with noise at a target SNR")
    s.add_argument("--clean", required=True)
    s.add_argument("--noise", required=True)
    s.add_argument("--snr", type=float, required=True, help="target SNR in dB")
    s.add_argument("--seed", type=int, default=0, help="noise crop seed")
    s.add_argument("--out", required=True, help="noisy WAV to write")
    s.add_argument("--noise-out", help="also write the scaled noise component")
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("enhance", help="enhance a noisy WAV")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--enhancer", choices=ENHANCERS, default="logmmse")
    s.add_argument("--masks", help="CIVM mask file, or a directory holding <input stem>.civm")
    s.add_argument("--clean", help="clean reference (irm_oracle)")
    s.add_argument("--noise-component", help="scaled noise written by 'mix --noise-out' (irm_oracle)")
    s.add_argument("--export-mask", help="write the applied mask as CIVM")
    s.add_argument("--grid", help="config file (STFT keys are used)")
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("vocode", help="tone-vocode a WAV (16-channel CI simulation)")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--grid", help="config file (vocoder keys are used)")
    s.set_defaults(func=cmd_vocode)

    s = sub.add_parser("eval", help="run the condition grid over a manifest")
    s.add_argument("--manifest", required=True, help="CSV with columns kind,id,path")
    s.add_argument("--grid", help="key = value config file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--enhancer", help="comma-separated enhancers, overrides the grid")
    s.add_argument("--masks", help="directory of <utterance_id>.civm files for 'external'")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="re-render a saved report, optionally merging PESQ scores")
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--input", help="report.json to read (default: <out>/report.json)")
    s.add_argument("--pesq", help="CSV of utterance_id,noise,snr_db,enhancer,value")
    s.add_argument("--formats", default="csv,json")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("spectrogram", help="export a spectrogram as PGM")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="PGM path; axis scales go to <out>.txt")
    s.add_argument("--grid", help="config file (STFT keys are used)")
    s.set_defaults(func=cmd_spectrogram)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"cisim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CisimError, OSError, ValueError) as exc:
        print(f"cisim: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
