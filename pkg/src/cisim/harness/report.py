"""Evaluation report model, aggregation and CSV/JSON persistence."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..errors import CisimError, ZeroVarianceError
from ..metrics import paired_ttest

SCHEMA = "cisim.eval-report"
SCHEMA_VERSION = 1
ALL_NOISES = "*"

ROW_FIELDS = ("utterance_id", "noise", "snr_db", "enhancer", "metric_name", "value", "error")
CONDITION_FIELDS = ("noise", "snr_db", "enhancer", "metric_name", "n", "mean", "sd")


@dataclass(frozen=True)
class ScoreRow:
    utterance_id: str
    noise: str
    snr_db: float
    enhancer: str
    metric_name: str
    value: Optional[float]
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.value is not None and not self.error

    def sort_key(self):
        return (self.utterance_id, self.noise, self.snr_db, self.enhancer, self.metric_name)


@dataclass(frozen=True)
class ConditionSummary:
    noise: str
    snr_db: float
    enhancer: str
    metric_name: str
    n: int
    mean: Optional[float]
    sd: Optional[float]


@dataclass(frozen=True)
class TTestEntry:
    condition_a: str
    condition_b: str
    metric: str
    n: int
    t_value: float
    dof: int
    p_value: float


@dataclass
class EvalReport:
    per_utterance: List[ScoreRow] = field(default_factory=list)
    per_condition: List[ConditionSummary] = field(default_factory=list)
    ttests: List[TTestEntry] = field(default_factory=list)
    config: Dict = field(default_factory=dict)

    @property
    def failures(self) -> List[ScoreRow]:
        return [r for r in self.per_utterance if not r.ok]

    def mean(self, metric: str, enhancer: str, snr_db: float, noise: str = ALL_NOISES) -> float:
        for c in self.per_condition:
            if (c.metric_name, c.enhancer, c.snr_db, c.noise) == (metric, enhancer, float(snr_db), noise):
                return c.mean
        raise KeyError((metric, enhancer, snr_db, noise))

    def to_dict(self) -> Dict:
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "per_utterance": [asdict(r) for r in self.per_utterance],
            "per_condition": [asdict(c) for c in self.per_condition],
            "ttests": [asdict(t) for t in self.ttests],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "EvalReport":
        if data.get("schema") != SCHEMA:
            raise CisimError(f"not a cisim report (schema={data.get('schema')!r})")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise CisimError(f"unsupported report schema version {data.get('schema_version')}")
        return cls(
            per_utterance=[ScoreRow(**r) for r in data["per_utterance"]],
            per_condition=[ConditionSummary(**c) for c in data["per_condition"]],
            ttests=[TTestEntry(**t) for t in data["ttests"]],
            config=data.get("config", {}),
        )


def condition_label(enhancer: str, noise: str, snr_db: float) -> str:
    return f"{enhancer}@{noise}/{snr_db:g}dB"


def summarize(rows: Iterable[ScoreRow]) -> List[ConditionSummary]:
    """Mean and sample SD per (noise, snr, enhancer, metric), plus the all-noise pool."""
    groups: Dict[tuple, List[float]] = defaultdict(list)
    for r in rows:
        keys = [(r.noise, r.snr_db, r.enhancer, r.metric_name), (ALL_NOISES, r.snr_db, r.enhancer, r.metric_name)]
        for key in keys:
            groups.setdefault(key, [])
            if r.ok:
                groups[key].append(r.value)
    out = []
    for key in sorted(groups, key=lambda k: (k[3], k[2], k[0], k[1])):
        vals = groups[key]
        if vals:
            mean = math.fsum(vals) / len(vals)
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        else:
            mean = sd = None
        out.append(ConditionSummary(*key, n=len(vals), mean=mean, sd=sd))
    return out


def paired_tests(rows: Sequence[ScoreRow], reference: str) -> List[TTestEntry]:
    """t-test every enhancer against ``reference`` per (noise, snr, metric), pairing by utterance."""
    table: Dict[tuple, Dict[str, Dict[tuple, float]]] = defaultdict(lambda: defaultdict(dict))
    for r in rows:
        if not r.ok:
            continue
        for noise in (r.noise, ALL_NOISES):
            table[(noise, r.snr_db, r.metric_name)][r.enhancer][(r.utterance_id, r.noise)] = r.value
    out = []
    for (noise, snr, metric) in sorted(table, key=lambda k: (k[2], k[0], k[1])):
        by_enh = table[(noise, snr, metric)]
        ref = by_enh.get(reference)
        if ref is None:
            continue
        for enh in sorted(by_enh):
            if enh == reference:
                continue
            keys = sorted(set(ref) & set(by_enh[enh]))
            if len(keys) < 2:
                continue
            a = [by_enh[enh][k] for k in keys]
            b = [ref[k] for k in keys]
            try:
                res = paired_ttest(a, b)
            except ZeroVarianceError:
                continue
            out.append(TTestEntry(
                condition_label(enh, noise, snr), condition_label(reference, noise, snr), metric,
                len(keys), res.t_value, res.dof, res.p_value,
            ))
    return out


def build_report(rows: Iterable[ScoreRow], config: Dict, reference: str = "none") -> EvalReport:
    rows = sorted(rows, key=ScoreRow.sort_key)
    return EvalReport(rows, summarize(rows), paired_tests(rows, reference), config)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_csv(rows: Sequence, fields: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in rows:
        writer.writerow([_fmt(getattr(r, f)) for f in fields])
    return buf.getvalue()


def emit_report(report: EvalReport, out_dir, formats: Iterable[str] = ("csv", "json")) -> List[Path]:
    """Write per_utterance.csv, per_condition.csv and/or report.json into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = set(formats)
    unknown = formats - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    written = []
    if "csv" in formats:
        for name, rows, fields in (
            ("per_utterance.csv", report.per_utterance, ROW_FIELDS),
            ("per_condition.csv", report.per_condition, CONDITION_FIELDS),
        ):
            path = out_dir / name
            path.write_text(rows_csv(rows, fields))
            written.append(path)
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(json.dumps(report.to_dict(), indent=1, allow_nan=False) + "\n")
        written.append(path)
    return written


def load_report(path) -> EvalReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    return EvalReport.from_dict(json.loads(path.read_text()))


def load_external_scores(path, metric: str = "PESQ") -> List[ScoreRow]:
    """Read externally computed scores (``utterance_id,noise,snr_db,enhancer,value``)."""
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ScoreRow(rec["utterance_id"], rec["noise"], float(rec["snr_db"]),
                                 rec["enhancer"], metric, float(rec["value"])))
    return rows


def merge_scores(report: EvalReport, extra: Iterable[ScoreRow], reference: str = "none") -> EvalReport:
    extra = list(extra)
    replaced = {r.metric_name for r in extra}
    kept = [r for r in report.per_utterance if r.metric_name not in replaced]
    return build_report(kept + extra, report.config, reference)


def render_tables(report: EvalReport, noise: str = ALL_NOISES) -> str:
    """Markdown tables, one per metric: enhancers as rows, SNRs as columns."""
    metrics = sorted({c.metric_name for c in report.per_condition})
    lines = []
    for metric in metrics:
        cells = [c for c in report.per_condition if c.metric_name == metric and c.noise == noise]
        snrs = sorted({c.snr_db for c in cells})
        enhancers = sorted({c.enhancer for c in cells}, key=lambda e: (e != "none", e))
        lookup = {(c.enhancer, c.snr_db): c.mean for c in cells}
        lines.append(f"### {metric} ({'all noises' if noise == ALL_NOISES else noise})")
        lines.append("")
        lines.append("| | " + " | ".join(f"{s:g} dB" for s in snrs) + " |")
        lines.append("|---" * (len(snrs) + 1) + "|")
        for enh in enhancers:
            vals = [lookup.get((enh, s)) for s in snrs]
            lines.append(f"| {enh} | " + " | ".join("-" if v is None else f"{v:.3f}" for v in vals) + " |")
        lines.append("")
    return "\n".join(lines)
