"""Binary detection metrics and report rendering.

The positive class is ``fake`` (this matters for precision/recall/F1, so it
is fixed here rather than configurable). A record whose response carries no
parseable answer is scored as a negative (``real``) prediction, never
dropped: a deployed detector has to output something.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .grammar import Label, ParsedResponse

REPORT_KIND = "metric-report"

# Fixed CSV column order; reports are diffable across runs.
CSV_COLUMNS = (
    "accuracy",
    "f1",
    "precision",
    "recall",
    "avg_tokens",
    "tp",
    "fp",
    "fn",
    "tn",
)

RENDER_FORMATS = ("table", "csv", "json")


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated response against its ground truth."""

    sample_id: int
    truth: Label
    parsed: ParsedResponse


@dataclass(frozen=True)
class MetricReport:
    """Detection quality plus token usage over an evaluation set."""

    accuracy: float
    f1: float
    precision: float
    recall: float
    avg_tokens: float
    tp: int
    fp: int
    fn: int
    tn: int
    mode_counts: dict[str, int]


def compute_metrics(records: list[EvalRecord]) -> MetricReport:
    """Confusion-matrix metrics over the records.

    ``accuracy = (TP+TN)/total``; precision/recall/F1 treat ``fake`` as the
    positive class and are 0 when their denominators vanish.
    """
    if not records:
        raise ValueError("compute_metrics needs at least one record")
    tp = fp = fn = tn = 0
    tokens = 0
    mode_counts: dict[str, int] = {}
    for record in records:
        predicted = record.parsed.answer if record.parsed.answer is not None else Label.REAL
        if record.truth is Label.FAKE:
            if predicted is Label.FAKE:
                tp += 1
            else:
                fn += 1
        else:
            if predicted is Label.FAKE:
                fp += 1
            else:
                tn += 1
        tokens += record.parsed.token_count
        key = record.parsed.mode.value if record.parsed.mode else "unclassifiable"
        mode_counts[key] = mode_counts.get(key, 0) + 1
    total = len(records)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricReport(
        accuracy=(tp + tn) / total,
        f1=f1,
        precision=precision,
        recall=recall,
        avg_tokens=tokens / total,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        mode_counts=mode_counts,
    )


def _report_dict(report: MetricReport, metadata: dict | None) -> dict:
    payload = {
        "kind": REPORT_KIND,
        "accuracy": report.accuracy,
        "f1": report.f1,
        "precision": report.precision,
        "recall": report.recall,
        "avg_tokens": report.avg_tokens,
        "confusion": {"tp": report.tp, "fp": report.fp, "fn": report.fn, "tn": report.tn},
        "mode_counts": dict(sorted(report.mode_counts.items())),
    }
    if metadata:
        payload.update(metadata)
    return payload


def render_report(
    report: MetricReport,
    format: str = "table",
    metadata: dict | None = None,
) -> str:
    """Render a report as ``table``, ``csv``, or ``json`` text.

    The JSON form round-trips losslessly through :func:`report_from_json`;
    metadata entries (e.g. a config hash) ride along in the CSV and JSON
    forms.
    """
    if format == "json":
        return json.dumps(_report_dict(report, metadata), sort_keys=True) + "\n"
    if format == "csv":
        values = {
            "accuracy": report.accuracy,
            "f1": report.f1,
            "precision": report.precision,
            "recall": report.recall,
            "avg_tokens": report.avg_tokens,
            "tp": report.tp,
            "fp": report.fp,
            "fn": report.fn,
            "tn": report.tn,
        }
        extra = dict(sorted((metadata or {}).items()))
        header = ",".join(list(CSV_COLUMNS) + list(extra))
        row = ",".join(
            [repr(float(values[c])) if c in ("accuracy", "f1", "precision", "recall", "avg_tokens") else str(values[c]) for c in CSV_COLUMNS]
            + [str(v) for v in extra.values()]
        )
        return f"{header}\n{row}\n"
    if format == "table":
        lines = [
            f"accuracy    {report.accuracy:.4f}",
            f"f1          {report.f1:.4f}",
            f"precision   {report.precision:.4f}",
            f"recall      {report.recall:.4f}",
            f"avg_tokens  {report.avg_tokens:.2f}",
        ]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}; expected one of {RENDER_FORMATS}")


def report_from_json(text: str) -> tuple[MetricReport, dict]:
    """Inverse of the JSON rendering; returns the report and its metadata."""
    payload = json.loads(text)
    if payload.get("kind") != REPORT_KIND:
        raise ValueError("text is not a rendered metric report")
    confusion = payload["confusion"]
    report = MetricReport(
        accuracy=payload["accuracy"],
        f1=payload["f1"],
        precision=payload["precision"],
        recall=payload["recall"],
        avg_tokens=payload["avg_tokens"],
        tp=confusion["tp"],
        fp=confusion["fp"],
        fn=confusion["fn"],
        tn=confusion["tn"],
        mode_counts=dict(payload["mode_counts"]),
    )
    known = {"kind", "accuracy", "f1", "precision", "recall", "avg_tokens", "confusion", "mode_counts"}
    metadata = {k: v for k, v in payload.items() if k not in known}
    return report, metadata
