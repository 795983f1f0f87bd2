"""Batch evaluation harness and the ``cisim`` command line."""

from .config import ConditionGrid, EvalConfig, Manifest, load_grid, load_manifest
from .report import EvalReport, emit_report, load_report
from .run import run_eval
from .spectrogram import export_spectrogram
