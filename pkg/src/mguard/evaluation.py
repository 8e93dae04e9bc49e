"""Window-level metrics: confusion matrix, accuracy/precision/recall/F1/
specificity, ROC AUC, and deterministic report rendering.

Anomalous is the positive class everywhere. Metrics with a zero
denominator are reported as 0 and flagged. The ROC AUC accumulates the
trapezoid area in integers, so it equals the pairwise tie-half-credit
definition exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LABEL_ANOMALOUS, LABEL_NORMAL
from .errors import DataError


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    n_unlabeled: int = 0  # windows excluded from the counts

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    cm: ConfusionMatrix
    roc_auc: float | None = None
    flags: list[str] = field(default_factory=list)
    config_fingerprint: str = ""


def confusion(verdicts, labels) -> ConfusionMatrix:
    """Count verdicts against ground truth; unlabeled windows are excluded
    and reported via n_unlabeled."""
    if len(verdicts) != len(labels):
        raise DataError(f"verdicts ({len(verdicts)}) and labels ({len(labels)}) differ in length")
    cm = ConfusionMatrix()
    for v, lab in zip(verdicts, labels):
        if lab not in (LABEL_NORMAL, LABEL_ANOMALOUS):
            cm.n_unlabeled += 1
            continue
        if v not in (0, 1):
            raise DataError(f"verdict must be 0 or 1, got {v!r}")
        if lab == LABEL_ANOMALOUS:
            if v == 1:
                cm.tp += 1
            else:
                cm.fn += 1
        else:
            if v == 1:
                cm.fp += 1
            else:
                cm.tn += 1
    return cm


def metrics(cm: ConfusionMatrix, roc_auc_value: float | None = None, config_fingerprint: str = "") -> MetricsReport:
    """Standard formulas over integer counts; zero-denominator metrics come
    back as 0 with the metric named in flags."""
    flags: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            flags.append(f"{name} undefined (zero denominator), reported as 0")
            return 0.0
        return num / den

    accuracy = ratio(cm.tp + cm.tn, cm.total, "accuracy")
    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    specificity = ratio(cm.tn, cm.tn + cm.fp, "specificity")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        flags.append("f1 undefined (zero denominator), reported as 0")
        f1 = 0.0
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=specificity,
        cm=cm,
        roc_auc=roc_auc_value,
        flags=flags,
        config_fingerprint=config_fingerprint,
    )


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve by a sorted trapezoidal sweep.

    Tie groups enter the curve as a whole, which is exactly the probability
    that a random anomalous window outranks a random normal one with ties
    worth 1/2.
    """
    s = np.asarray(scores, np.float64)
    lab = np.asarray(labels, np.int64)
    if s.shape != lab.shape or s.ndim != 1:
        raise DataError(f"scores {s.shape} and labels {lab.shape} must be equal-length 1-D")
    pos = int((lab == 1).sum())
    neg = int((lab == 0).sum())
    if pos + neg != len(lab):
        raise DataError("labels must contain only 0 or 1")
    if pos == 0 or neg == 0:
        raise DataError("ROC AUC needs at least one anomalous and one normal window")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    is_pos = (lab[order] == 1).astype(np.int64)
    # group boundaries: last index of each tie group in descending order
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.concatenate([boundary, [len(s_sorted) - 1]])
    tp = np.cumsum(is_pos)[ends]
    fp = ends + 1 - tp
    tp_prev = np.concatenate([[0], tp[:-1]])
    fp_prev = np.concatenate([[0], fp[:-1]])
    area2 = int(((fp - fp_prev) * (tp + tp_prev)).sum())  # exact in integers
    return area2 / (2 * pos * neg)


# ---------------------------------------------------------------------------
# Rendering

_METRIC_ORDER = ["accuracy", "precision", "recall", "f1", "specificity", "roc_auc"]


def render_report(report: MetricsReport) -> str:
    cm = report.cm
    lines = [
        f"windows evaluated: {cm.total} (unlabeled skipped: {cm.n_unlabeled})",
        f"confusion: tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}",
    ]
    for name in _METRIC_ORDER:
        value = getattr(report, name)
        lines.append(f"{name}: {'n/a' if value is None else f'{value:.6f}'}")
    lines.append("flags: " + ("; ".join(report.flags) if report.flags else "none"))
    if report.config_fingerprint:
        lines.append(f"config: {report.config_fingerprint}")
    return "\n".join(lines) + "\n"


def write_report_files(out_dir, report: MetricsReport) -> dict[str, str]:
    """Emit report.txt, metrics.csv (metric,value) and confusion.csv."""
    out = Path(out_dir)
    paths = {
        "report": out / "report.txt",
        "metrics": out / "metrics.csv",
        "confusion": out / "confusion.csv",
    }
    paths["report"].write_text(render_report(report))
    with open(paths["metrics"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name in _METRIC_ORDER:
            value = getattr(report, name)
            writer.writerow([name, "" if value is None else repr(value)])
        writer.writerow(["windows", report.cm.total])
        writer.writerow(["unlabeled_skipped", report.cm.n_unlabeled])
    with open(paths["confusion"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", "pred_anomalous", "pred_normal"])
        writer.writerow(["true_anomalous", report.cm.tp, report.cm.fn])
        writer.writerow(["true_normal", report.cm.fp, report.cm.tn])
    return {k: str(v) for k, v in paths.items()}
